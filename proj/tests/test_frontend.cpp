#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "scenewise/common.hpp"
#include "scenewise/frontend.hpp"
#include "scenewise/rng.hpp"

using namespace scenewise;

namespace {

AudioClip sine_clip(double freq_hz, int rate, double seconds, double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate_hz = rate;
  size_t n = static_cast<size_t>(std::lround(seconds * rate));
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    clip.samples[i] =
        static_cast<float>(amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / rate));
  }
  return clip;
}

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t n = std::min(a.size(), b.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

// reflect padding oracle, reimplemented independently of the frontend
size_t reflect_oracle(long long i, size_t n) {
  while (true) {
    if (i < 0) {
      i = -i;
    } else if (i >= static_cast<long long>(n)) {
      i = 2 * (static_cast<long long>(n) - 1) - i;
    } else {
      return static_cast<size_t>(i);
    }
  }
}

// the analytic mel row index a pure tone should excite
int analytic_mel_index(const FrontendConfig& cfg, double freq_hz) {
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax());
  const double step = (mel_hi - mel_lo) / (cfg.mel_bins + 1);
  return static_cast<int>(std::lround((hz_to_mel(freq_hz) - mel_lo) / step - 1.0));
}

}  // namespace

TEST_CASE("resample forces the length ratio: 44100 samples at 44.1 kHz -> 32000 at 32 kHz") {
  AudioClip clip = sine_clip(440.0, 44100, 1.0);
  REQUIRE(clip.samples.size() == 44100);
  AudioClip out = resample(clip, 32000);
  CHECK(out.sample_rate_hz == 32000);
  CHECK(out.samples.size() == 32000);
}

TEST_CASE("resample at identical rates returns the clip unchanged") {
  AudioClip clip = sine_clip(440.0, 32000, 0.5);
  AudioClip out = resample(clip, 32000);
  CHECK(out.samples == clip.samples);
  CHECK(out.sample_rate_hz == 32000);
}

TEST_CASE("resampled 1 kHz sine correlates > 0.999 with the directly synthesized tone") {
  AudioClip src = sine_clip(1000.0, 44100, 1.0);
  AudioClip out = resample(src, 32000);
  AudioClip reference = sine_clip(1000.0, 32000, 1.0);
  CHECK(pearson(out.samples, reference.samples) > 0.999);
}

TEST_CASE("resample also preserves band-limited content when upsampling") {
  AudioClip src = sine_clip(1000.0, 16000, 1.0);
  AudioClip out = resample(src, 32000);
  AudioClip reference = sine_clip(1000.0, 32000, 1.0);
  CHECK(pearson(out.samples, reference.samples) > 0.999);
}

TEST_CASE("resample rejects empty input") {
  AudioClip clip;
  clip.sample_rate_hz = 32000;
  CHECK_THROWS_AS(resample(clip, 16000), Error);
}

TEST_CASE("DC signal concentrates in bin 0 when the window matches the FFT") {
  FrontendConfig cfg;
  cfg.target_rate_hz = 8000;
  cfg.fft_size = 1024;
  cfg.window_samples = 1024;
  cfg.hop_samples = 256;
  cfg.mel_bins = 16;
  cfg.rectangular_window = true;

  AudioClip clip;
  clip.sample_rate_hz = 8000;
  clip.samples.assign(4096, 0.75f);
  PowerSpectrogram power = stft_power(clip, cfg);
  for (int t = 0; t < power.frames; ++t) {
    double total = 0.0;
    for (int k = 0; k < power.bins; ++k) total += power.at(k, t);
    CHECK(power.at(0, t) > 0.99 * total);
  }
}

TEST_CASE("unit impulse has a flat magnitude spectrum in rectangular-window mode") {
  FrontendConfig cfg;
  cfg.target_rate_hz = 8000;
  cfg.fft_size = 512;
  cfg.window_samples = 512;
  cfg.hop_samples = 128;
  cfg.mel_bins = 16;
  cfg.rectangular_window = true;

  AudioClip clip;
  clip.sample_rate_hz = 8000;
  clip.samples.assign(2048, 0.0f);
  clip.samples[1024] = 1.0f;
  PowerSpectrogram power = stft_power(clip, cfg);

  // pick an interior frame whose window contains only the original impulse
  const int pad = cfg.window_samples / 2;
  int frame = -1;
  for (int m = 0; m < power.frames; ++m) {
    long long start = static_cast<long long>(m) * cfg.hop_samples - pad;
    long long end = start + cfg.window_samples;
    if (start > 0 && end < 2048 && start <= 1024 && 1024 < end) frame = m;
  }
  REQUIRE(frame >= 0);
  for (int k = 0; k < power.bins; ++k) {
    CHECK(power.at(k, frame) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("per-frame spectral energy satisfies Parseval against the windowed frame") {
  FrontendConfig cfg;  // production defaults, Hann window
  Rng rng(123);
  AudioClip clip;
  clip.sample_rate_hz = cfg.target_rate_hz;
  clip.samples.resize(32000);
  for (float& s : clip.samples) s = static_cast<float>(rng.uniform(-0.5, 0.5));

  PowerSpectrogram power = stft_power(clip, cfg);

  const int pad = cfg.window_samples / 2;
  for (int m : {0, 7, 31, power.frames - 1}) {
    // time-domain frame energy, recomputed from scratch
    double energy_time = 0.0;
    for (int j = 0; j < cfg.window_samples; ++j) {
      double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * j / cfg.window_samples);
      long long idx = static_cast<long long>(m) * cfg.hop_samples - pad + j;
      double x = clip.samples[reflect_oracle(idx, clip.samples.size())] * w;
      energy_time += x * x;
    }
    // one-sided power sum; interior bins count twice
    double energy_freq = power.at(0, m) + power.at(power.bins - 1, m);
    for (int k = 1; k < power.bins - 1; ++k) energy_freq += 2.0 * power.at(k, m);
    energy_freq /= static_cast<double>(cfg.fft_size);
    CHECK(energy_freq == doctest::Approx(energy_time).epsilon(1e-6));
  }
}

TEST_CASE("stft rejects clips shorter than one hop and mismatched rates") {
  FrontendConfig cfg;
  AudioClip tiny;
  tiny.sample_rate_hz = 32000;
  tiny.samples.assign(static_cast<size_t>(cfg.hop_samples - 1), 0.1f);
  CHECK_THROWS_AS(stft_power(tiny, cfg), Error);

  AudioClip wrong_rate = sine_clip(440.0, 44100, 1.0);
  CHECK_THROWS_AS(stft_power(wrong_rate, cfg), Error);
}

TEST_CASE("single mel filter spans (fmin, fmax)") {
  FrontendConfig cfg;
  cfg.mel_bins = 1;
  cfg.fmin_hz = 100.0;
  cfg.fmax_hz = 4000.0;
  MelFilterbank fb = mel_filterbank(cfg);
  REQUIRE(fb.rows.size() == 1);
  CHECK(fb.rows[0].weights.size() > 10);
  const double bin_hz = static_cast<double>(cfg.target_rate_hz) / cfg.fft_size;
  CHECK(fb.rows[0].first_bin * bin_hz >= 100.0);
  const double last_hz =
      (fb.rows[0].first_bin + static_cast<double>(fb.rows[0].weights.size()) - 1) * bin_hz;
  CHECK(last_hz <= 4000.0);
  // center frequency sits at the mel midpoint
  const double center_mel = (hz_to_mel(100.0) + hz_to_mel(4000.0)) / 2.0;
  CHECK(fb.center_hz[0] == doctest::Approx(mel_to_hz(center_mel)).epsilon(1e-9));
}

TEST_CASE("mel filter centers are strictly monotone") {
  FrontendConfig cfg;
  MelFilterbank fb = mel_filterbank(cfg);
  REQUIRE(fb.center_hz.size() == 256);
  for (size_t m = 1; m < fb.center_hz.size(); ++m) {
    CHECK(fb.center_hz[m] > fb.center_hz[m - 1]);
  }
  CHECK(fb.center_hz[0] < fb.center_hz[255]);
}

TEST_CASE("every default filter row has positive weights and rows sum sanely") {
  FrontendConfig cfg;
  MelFilterbank fb = mel_filterbank(cfg);
  for (const auto& row : fb.rows) {
    CHECK_FALSE(row.weights.empty());
    for (double w : row.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
  }
  // dense materialization matches the sparse rows
  std::vector<double> dense = fb.dense();
  CHECK(dense.size() == static_cast<size_t>(fb.mel_bins) * fb.fft_bins);
}

TEST_CASE("a 1 kHz tone spectrum peaks in the analytic mel row") {
  FrontendConfig cfg;
  MelFilterbank fb = mel_filterbank(cfg);

  // synthetic power spectrum concentrated at the 1 kHz FFT bin
  const double bin_hz = static_cast<double>(cfg.target_rate_hz) / cfg.fft_size;
  const int tone_bin = static_cast<int>(std::lround(1000.0 / bin_hz));
  std::vector<double> spectrum(static_cast<size_t>(cfg.fft_size / 2 + 1), 0.0);
  spectrum[static_cast<size_t>(tone_bin)] = 1.0;

  int argmax = -1;
  double best = -1.0;
  for (int m = 0; m < fb.mel_bins; ++m) {
    double acc = 0.0;
    const auto& row = fb.rows[static_cast<size_t>(m)];
    for (size_t j = 0; j < row.weights.size(); ++j) {
      acc += row.weights[j] * spectrum[static_cast<size_t>(row.first_bin) + j];
    }
    if (acc > best) {
      best = acc;
      argmax = m;
    }
  }
  const int expect = analytic_mel_index(cfg, 1000.0);
  CHECK(std::abs(argmax - expect) <= 1);
}

TEST_CASE("too many mel bins for the FFT resolution is a configuration error") {
  FrontendConfig cfg;
  cfg.fft_size = 256;
  cfg.window_samples = 256;
  cfg.mel_bins = 256;  // 129 usable bins cannot feed 256 filters
  CHECK_THROWS_AS(mel_filterbank(cfg), Error);
}

TEST_CASE("one second of silence maps to a uniform log floor") {
  FrontendConfig cfg;
  AudioClip clip;
  clip.sample_rate_hz = 32000;
  clip.samples.assign(32000, 0.0f);
  MelSpectrogram mel = compute_mel(clip, cfg);
  const float expect = static_cast<float>(std::log(1e-5));
  for (float v : mel.values) CHECK(v == expect);
}

TEST_CASE("a one-second 32 kHz clip yields shape (256, 65)") {
  FrontendConfig cfg;
  AudioClip clip = sine_clip(500.0, 32000, 1.0);
  MelSpectrogram mel = compute_mel(clip, cfg);
  CHECK(mel.mel_bins == 256);
  CHECK(mel.frames == 65);
  CHECK(mel.values.size() == 256u * 65u);
  CHECK(mel.config_fingerprint == cfg.fingerprint());
}

TEST_CASE("a -6 dBFS 1 kHz tone peaks within one bin of the analytic mel index") {
  FrontendConfig cfg;
  AudioClip clip = sine_clip(1000.0, 32000, 1.0, 0.5);  // -6 dBFS
  MelSpectrogram mel = compute_mel(clip, cfg);
  const int expect = analytic_mel_index(cfg, 1000.0);
  for (int t = 0; t < mel.frames; ++t) {
    int argmax = 0;
    for (int m = 1; m < mel.mel_bins; ++m) {
      if (mel.at(m, t) > mel.at(argmax, t)) argmax = m;
    }
    CAPTURE(t);
    CHECK(std::abs(argmax - expect) <= 1);
  }
}

TEST_CASE("compute_mel resamples internally when the clip rate differs") {
  FrontendConfig cfg;
  AudioClip clip = sine_clip(1000.0, 44100, 1.0, 0.5);
  MelSpectrogram mel = compute_mel(clip, cfg);
  CHECK(mel.frames == frame_count(32000, cfg.hop_samples));
  const int expect = analytic_mel_index(cfg, 1000.0);
  int argmax = 0;
  for (int m = 1; m < mel.mel_bins; ++m) {
    if (mel.at(m, 30) > mel.at(argmax, 30)) argmax = m;
  }
  CHECK(std::abs(argmax - expect) <= 1);
}

TEST_CASE("frame-count formula holds for random clip lengths >= one hop") {
  FrontendConfig cfg;
  cfg.fft_size = 1024;
  cfg.window_samples = 768;
  cfg.hop_samples = 125;
  cfg.mel_bins = 64;
  Rng rng(2024);
  for (int trial = 0; trial < 24; ++trial) {
    size_t len = static_cast<size_t>(cfg.hop_samples) + rng.index(20000);
    AudioClip clip;
    clip.sample_rate_hz = cfg.target_rate_hz;
    clip.samples.resize(len);
    for (float& s : clip.samples) s = static_cast<float>(rng.uniform(-0.3, 0.3));
    MelSpectrogram mel = compute_mel(clip, cfg);
    CAPTURE(len);
    CHECK(mel.frames == static_cast<int>(len / static_cast<size_t>(cfg.hop_samples)) + 1);
    for (float v : mel.values) {
      CHECK(std::isfinite(v));
      CHECK(v >= static_cast<float>(std::log(cfg.log_floor)) - 1e-6f);
    }
  }
}

TEST_CASE("log-mel output is invariant to an amplitude sign flip") {
  FrontendConfig cfg;
  AudioClip clip = sine_clip(750.0, 32000, 1.0, 0.4);
  AudioClip flipped = clip;
  for (float& s : flipped.samples) s = -s;
  MelSpectrogram a = compute_mel(clip, cfg);
  MelSpectrogram b = compute_mel(flipped, cfg);
  REQUIRE(a.values.size() == b.values.size());
  for (size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));
  }
}

TEST_CASE("scaling amplitude by c shifts un-floored log-mel values by 2 log c") {
  FrontendConfig cfg;
  AudioClip clip = sine_clip(1200.0, 32000, 1.0, 0.25);
  const double c = 2.0;
  AudioClip scaled = clip;
  for (float& s : scaled.samples) s = static_cast<float>(s * c);
  MelSpectrogram a = compute_mel(clip, cfg);
  MelSpectrogram b = compute_mel(scaled, cfg);
  const float floor_val = static_cast<float>(std::log(cfg.log_floor));
  const double shift = 2.0 * std::log(c);
  size_t compared = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] <= floor_val + 1.0f || b.values[i] <= floor_val + 1.0f) continue;
    CHECK(static_cast<double>(b.values[i]) - a.values[i] == doctest::Approx(shift).epsilon(1e-4));
    ++compared;
  }
  CHECK(compared > 100);
}

TEST_CASE("frontend output contains no NaN or Inf for harsh inputs") {
  FrontendConfig cfg;
  AudioClip clip;
  clip.sample_rate_hz = 32000;
  clip.samples.assign(32000, 1.0f);  // full-scale DC
  for (size_t i = 0; i < clip.samples.size(); i += 2) clip.samples[i] = -1.0f;
  MelSpectrogram mel = compute_mel(clip, cfg);
  for (float v : mel.values) CHECK(std::isfinite(v));
}

TEST_CASE("invalid frontend configs are rejected") {
  FrontendConfig cfg;
  cfg.window_samples = cfg.fft_size + 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FrontendConfig{};
  cfg.hop_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FrontendConfig{};
  cfg.fmin_hz = 20000.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FrontendConfig{};
  cfg.log_floor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("non-finite samples are rejected") {
  AudioClip clip;
  clip.sample_rate_hz = 32000;
  clip.samples.assign(1000, 0.1f);
  clip.samples[500] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate_clip(clip), Error);
}
