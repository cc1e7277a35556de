#pragma once

#include <cstdint>
#include <vector>

namespace scenewise {

struct AudioClip {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate_hz = 0;
};

// Throws InvalidInput on empty/non-finite samples or non-positive rate.
void validate_clip(const AudioClip& clip);

struct FrontendConfig {
  int target_rate_hz = 32000;
  int fft_size = 4096;
  int window_samples = 3072;  // 96 ms at 32 kHz
  int hop_samples = 500;      // 15.625 ms
  int mel_bins = 256;
  double fmin_hz = 0.0;
  double fmax_hz = -1.0;  // < 0 means target_rate_hz / 2
  double log_floor = 1e-5;
  bool rectangular_window = false;  // spectral test fixtures only

  double fmax() const { return fmax_hz < 0.0 ? target_rate_hz / 2.0 : fmax_hz; }
  uint64_t fingerprint() const;
  void validate() const;  // Config error on violated invariants
};

struct MelSpectrogram {
  std::vector<float> values;  // row-major (mel_bins, frames)
  int mel_bins = 0;
  int frames = 0;
  uint64_t config_fingerprint = 0;

  float at(int mel, int frame) const {
    return values[static_cast<size_t>(mel) * static_cast<size_t>(frames) +
                  static_cast<size_t>(frame)];
  }
};

struct PowerSpectrogram {
  std::vector<double> values;  // row-major (bins, frames)
  int bins = 0;
  int frames = 0;

  double at(int bin, int frame) const {
    return values[static_cast<size_t>(bin) * static_cast<size_t>(frames) +
                  static_cast<size_t>(frame)];
  }
};

// Triangular mel filterbank stored sparsely; dense() materializes the
// (mel_bins, fft_size/2 + 1) matrix.
struct MelFilterbank {
  struct Row {
    int first_bin = 0;
    std::vector<double> weights;
  };
  int mel_bins = 0;
  int fft_bins = 0;
  std::vector<Row> rows;
  std::vector<double> center_hz;

  std::vector<double> dense() const;
};

// HTK mel scale
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Frame count under center padding: floor(samples / hop) + 1.
int frame_count(size_t samples, int hop_samples);

// Windowed-sinc (Kaiser beta = 8, 64 taps per phase) sample-rate converter.
// Identical rates return the input unchanged.
AudioClip resample(const AudioClip& clip, int target_rate_hz);

// Power spectrogram of Hann-windowed, zero-padded frames; the clip is
// reflect-padded by window/2 on both sides. Requires clip at the config rate.
PowerSpectrogram stft_power(const AudioClip& clip, const FrontendConfig& cfg);

MelFilterbank mel_filterbank(const FrontendConfig& cfg);

// log(max(filterbank * power, log_floor)); resamples internally if needed.
MelSpectrogram compute_mel(const AudioClip& clip, const FrontendConfig& cfg);

}  // namespace scenewise
