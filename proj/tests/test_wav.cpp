#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scenewise/common.hpp"
#include "scenewise/rng.hpp"
#include "scenewise/wav.hpp"
#include "test_util.hpp"

using namespace scenewise;

namespace {

std::vector<float> ramp(size_t n) {
  std::vector<float> v(n);
  for (size_t i = 0; i < n; ++i) {
    v[i] = -0.9f + 1.8f * static_cast<float>(i) / static_cast<float>(n - 1);
  }
  return v;
}

}  // namespace

TEST_CASE("float32 WAV round-trips bit-exactly") {
  testutil::TempDir dir("wav");
  Rng rng(11);
  std::vector<float> samples(4321);
  for (float& s : samples) s = static_cast<float>(rng.uniform(-1.0, 1.0));
  write_wav_mono(dir.path / "f32.wav", samples, 32000, WavEncoding::Float32);
  WavData back = read_wav_mono(dir.path / "f32.wav");
  CHECK(back.sample_rate_hz == 32000);
  REQUIRE(back.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) CHECK(back.samples[i] == samples[i]);
}

TEST_CASE("integer PCM encodings round-trip within quantization error") {
  testutil::TempDir dir("wav");
  std::vector<float> samples = ramp(1000);
  struct Case {
    WavEncoding enc;
    const char* name;
    double tol;
  };
  // quantization step + the usual write-by-32767 / read-by-32768 asymmetry
  for (const auto& c : {Case{WavEncoding::Pcm16, "p16.wav", 2.0 / 32768.0},
                        Case{WavEncoding::Pcm24, "p24.wav", 2.0 / 8388608.0},
                        Case{WavEncoding::Pcm32, "p32.wav", 1e-7}}) {
    write_wav_mono(dir.path / c.name, samples, 44100, c.enc);
    WavData back = read_wav_mono(dir.path / c.name);
    CHECK(back.sample_rate_hz == 44100);
    REQUIRE(back.samples.size() == samples.size());
    double worst = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(back.samples[i]) - samples[i]));
    }
    CAPTURE(c.name);
    CHECK(worst < c.tol);
  }
}

TEST_CASE("multi-channel WAV files are rejected") {
  testutil::TempDir dir("wav");
  // hand-built 2-channel, 16-bit file with a single frame
  std::string bytes;
  bytes += "RIFF";
  auto u32 = [&bytes](uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&bytes](uint16_t v) {
    bytes.push_back(static_cast<char>(v & 0xff));
    bytes.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  u32(36 + 4);
  bytes += "WAVEfmt ";
  u32(16);
  u16(1);      // PCM
  u16(2);      // stereo
  u32(48000);  // rate
  u32(48000 * 4);
  u16(4);
  u16(16);
  bytes += "data";
  u32(4);
  u16(100);
  u16(200);
  testutil::write_file(dir.path / "stereo.wav", bytes);

  CHECK_THROWS_WITH_AS(read_wav_mono(dir.path / "stereo.wav"),
                       doctest::Contains("2 channels"), Error);
}

TEST_CASE("garbage and truncated files raise format errors") {
  testutil::TempDir dir("wav");
  testutil::write_file(dir.path / "nope.wav", "this is not audio");
  CHECK_THROWS_AS(read_wav_mono(dir.path / "nope.wav"), Error);

  std::vector<float> samples = ramp(64);
  write_wav_mono(dir.path / "ok.wav", samples, 8000, WavEncoding::Pcm16);
  std::string good = testutil::read_file(dir.path / "ok.wav");
  testutil::write_file(dir.path / "cut.wav", good.substr(0, 40));
  CHECK_THROWS_AS(read_wav_mono(dir.path / "cut.wav"), Error);

  CHECK_THROWS_AS(read_wav_mono(dir.path / "missing.wav"), Error);
}
