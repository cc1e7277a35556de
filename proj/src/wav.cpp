#include "scenewise/wav.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "scenewise/common.hpp"

namespace scenewise {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  raise(ErrorKind::Format, path.string() + ": " + why);
}

}  // namespace

WavData read_wav_mono(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open " + path.string());
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const uint8_t* data = reinterpret_cast<const uint8_t*>(contents.data());
  size_t size = contents.size();

  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    bad(path, "not a RIFF/WAVE file");
  }

  uint16_t format = 0;
  uint16_t channels = 0;
  uint16_t bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const uint8_t* payload = nullptr;
  size_t payload_size = 0;

  size_t pos = 12;
  while (pos + 8 <= size) {
    const uint8_t* chunk = data + pos;
    uint32_t chunk_size = read_u32(chunk + 4);
    const uint8_t* body = chunk + 8;
    if (pos + 8 + chunk_size > size) bad(path, "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) bad(path, "fmt chunk too small");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40) bad(path, "extensible fmt chunk too small");
        format = read_u16(body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = body;
      payload_size = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) bad(path, "missing fmt chunk");
  if (payload == nullptr) bad(path, "missing data chunk");
  if (channels != 1) {
    bad(path, strprintf("expected mono audio, got %u channels", channels));
  }
  if (rate == 0) bad(path, "zero sample rate");

  WavData out;
  out.sample_rate_hz = static_cast<int>(rate);

  if (format == kFormatFloat && bits == 32) {
    size_t n = payload_size / 4;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      out.samples[i] = std::bit_cast<float>(read_u32(payload + 4 * i));
    }
  } else if (format == kFormatPcm && bits == 16) {
    size_t n = payload_size / 2;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t v = static_cast<int16_t>(read_u16(payload + 2 * i));
      out.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == kFormatPcm && bits == 24) {
    size_t n = payload_size / 3;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const uint8_t* p = payload + 3 * i;
      int32_t v = static_cast<int32_t>(static_cast<uint32_t>(p[0]) << 8 |
                                       static_cast<uint32_t>(p[1]) << 16 |
                                       static_cast<uint32_t>(p[2]) << 24) >> 8;
      out.samples[i] = static_cast<float>(v) / 8388608.0f;
    }
  } else if (format == kFormatPcm && bits == 32) {
    size_t n = payload_size / 4;
    out.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int32_t v = static_cast<int32_t>(read_u32(payload + 4 * i));
      out.samples[i] = static_cast<float>(static_cast<double>(v) / 2147483648.0);
    }
  } else {
    bad(path, strprintf("unsupported format (tag %u, %u-bit)", format, bits));
  }

  if (out.samples.empty()) bad(path, "empty data chunk");
  return out;
}

void write_wav_mono(const std::filesystem::path& path, const float* samples,
                    size_t count, int sample_rate_hz, WavEncoding encoding) {
  if (count == 0) raise(ErrorKind::InvalidInput, "refusing to write empty WAV " + path.string());
  if (sample_rate_hz <= 0) raise(ErrorKind::InvalidInput, "invalid sample rate");

  uint16_t bits = 0;
  uint16_t format = kFormatPcm;
  switch (encoding) {
    case WavEncoding::Pcm16: bits = 16; break;
    case WavEncoding::Pcm24: bits = 24; break;
    case WavEncoding::Pcm32: bits = 32; break;
    case WavEncoding::Float32: bits = 32; format = kFormatFloat; break;
  }
  uint32_t bytes_per_sample = bits / 8;
  uint32_t data_size = static_cast<uint32_t>(count * bytes_per_sample);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(sample_rate_hz));
  put_u32(out, static_cast<uint32_t>(sample_rate_hz) * bytes_per_sample);
  put_u16(out, static_cast<uint16_t>(bytes_per_sample));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);

  auto clamp = [](float v) { return v < -1.0f ? -1.0f : (v > 1.0f ? 1.0f : v); };
  for (size_t i = 0; i < count; ++i) {
    switch (encoding) {
      case WavEncoding::Float32:
        put_u32(out, std::bit_cast<uint32_t>(samples[i]));
        break;
      case WavEncoding::Pcm16: {
        double scaled = static_cast<double>(clamp(samples[i])) * 32767.0;
        put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::lround(scaled))));
        break;
      }
      case WavEncoding::Pcm24: {
        double scaled = static_cast<double>(clamp(samples[i])) * 8388607.0;
        int32_t v = static_cast<int32_t>(std::lround(scaled));
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        break;
      }
      case WavEncoding::Pcm32: {
        double scaled = static_cast<double>(clamp(samples[i])) * 2147483647.0;
        put_u32(out, static_cast<uint32_t>(static_cast<int32_t>(std::llround(scaled))));
        break;
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace scenewise
