#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace scenewise {

enum class WavEncoding { Pcm16, Pcm24, Pcm32, Float32 };

struct WavData {
  std::vector<float> samples;
  int sample_rate_hz = 0;
};

// Mono little-endian WAV only; 16/24/32-bit PCM and 32-bit float.
// Multi-channel files and other codecs are rejected with a Format error.
WavData read_wav_mono(const std::filesystem::path& path);

void write_wav_mono(const std::filesystem::path& path, const float* samples,
                    size_t count, int sample_rate_hz, WavEncoding encoding);

inline void write_wav_mono(const std::filesystem::path& path,
                           const std::vector<float>& samples, int sample_rate_hz,
                           WavEncoding encoding = WavEncoding::Float32) {
  write_wav_mono(path, samples.data(), samples.size(), sample_rate_hz, encoding);
}

}  // namespace scenewise
