#include "scenewise/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "scenewise/common.hpp"
#include "scenewise/fft.hpp"

namespace scenewise {

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr int kKernelHalfWidth = 32;  // 64 taps per output sample
constexpr int kKernelPhases = 512;

double bessel_i0(double x) {
  // power series; converges quickly for the argument range we use
  double sum = 1.0;
  double term = 1.0;
  double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-14 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

// Phase-interpolated Kaiser-windowed sinc kernel for one rate pair.
struct ResampleKernel {
  int half_width = kKernelHalfWidth;
  int phases = kKernelPhases;
  std::vector<double> taps;  // (phases + 1) rows of 2*half_width taps

  ResampleKernel(int src_rate, int dst_rate) {
    double cutoff = std::min(1.0, static_cast<double>(dst_rate) / static_cast<double>(src_rate));
    double i0_beta = bessel_i0(kKaiserBeta);
    int width = 2 * half_width;
    taps.resize(static_cast<size_t>(phases + 1) * static_cast<size_t>(width));
    for (int p = 0; p <= phases; ++p) {
      double frac = static_cast<double>(p) / static_cast<double>(phases);
      double* row = &taps[static_cast<size_t>(p) * static_cast<size_t>(width)];
      double sum = 0.0;
      for (int t = 0; t < width; ++t) {
        // source offset of tap t relative to the interpolation point
        double u = (half_width - 1 + frac) - static_cast<double>(t);
        double window_arg = u / static_cast<double>(half_width);
        double w = 0.0;
        if (std::abs(window_arg) <= 1.0) {
          w = bessel_i0(kKaiserBeta * std::sqrt(1.0 - window_arg * window_arg)) / i0_beta;
        }
        row[t] = cutoff * sinc(cutoff * u) * w;
        sum += row[t];
      }
      for (int t = 0; t < width; ++t) row[t] /= sum;  // flat response at DC
    }
  }
};

const ResampleKernel& kernel_for(int src_rate, int dst_rate) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<ResampleKernel>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(src_rate, dst_rate);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, std::make_unique<ResampleKernel>(src_rate, dst_rate)).first;
  }
  return *it->second;
}

// Reflected index for center padding; multiple bounces keep short clips valid.
inline size_t reflect_index(long long i, size_t n) {
  if (n == 1) return 0;
  long long period = 2 * (static_cast<long long>(n) - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<size_t>(m);
}

}  // namespace

void validate_clip(const AudioClip& clip) {
  if (clip.samples.empty()) raise(ErrorKind::InvalidInput, "audio clip has no samples");
  if (clip.sample_rate_hz <= 0) raise(ErrorKind::InvalidInput, "audio clip sample rate must be positive");
  for (float v : clip.samples) {
    if (!std::isfinite(v)) raise(ErrorKind::InvalidInput, "audio clip contains non-finite samples");
  }
}

void FrontendConfig::validate() const {
  if (target_rate_hz <= 0) raise(ErrorKind::Config, "target_rate_hz must be positive");
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0) {
    raise(ErrorKind::Config, "fft_size must be a positive power of two");
  }
  if (window_samples <= 0 || window_samples > fft_size) {
    raise(ErrorKind::Config, "window_samples must be in [1, fft_size]");
  }
  if (hop_samples < 1) raise(ErrorKind::Config, "hop_samples must be >= 1");
  if (mel_bins < 1) raise(ErrorKind::Config, "mel_bins must be >= 1");
  double hi = fmax();
  if (fmin_hz < 0.0 || fmin_hz >= hi || hi > target_rate_hz / 2.0 + 1e-9) {
    raise(ErrorKind::Config, "need 0 <= fmin_hz < fmax_hz <= target_rate_hz/2");
  }
  if (log_floor <= 0.0) raise(ErrorKind::Config, "log_floor must be positive");
}

uint64_t FrontendConfig::fingerprint() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a over the fields
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<uint64_t>(target_rate_hz));
  mix(static_cast<uint64_t>(fft_size));
  mix(static_cast<uint64_t>(window_samples));
  mix(static_cast<uint64_t>(hop_samples));
  mix(static_cast<uint64_t>(mel_bins));
  auto bits = [](double d) {
    uint64_t u;
    static_assert(sizeof(u) == sizeof(d));
    __builtin_memcpy(&u, &d, 8);
    return u;
  };
  mix(bits(fmin_hz));
  mix(bits(fmax()));
  mix(bits(log_floor));
  mix(rectangular_window ? 1 : 0);
  return h;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int frame_count(size_t samples, int hop_samples) {
  return static_cast<int>(samples / static_cast<size_t>(hop_samples)) + 1;
}

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
  validate_clip(clip);
  if (target_rate_hz <= 0) raise(ErrorKind::InvalidInput, "target rate must be positive");
  if (clip.sample_rate_hz == target_rate_hz) return clip;

  const int src = clip.sample_rate_hz;
  const int dst = target_rate_hz;
  const ResampleKernel& kernel = kernel_for(src, dst);
  const int width = 2 * kernel.half_width;

  size_t out_len = static_cast<size_t>(std::llround(
      static_cast<double>(clip.samples.size()) * static_cast<double>(dst) / static_cast<double>(src)));
  if (out_len == 0) out_len = 1;

  AudioClip out;
  out.sample_rate_hz = dst;
  out.samples.resize(out_len);

  const long long n = static_cast<long long>(clip.samples.size());
  for (size_t i = 0; i < out_len; ++i) {
    // exact rational source position: center = i * src / dst
    unsigned long long num = static_cast<unsigned long long>(i) * static_cast<unsigned long long>(src);
    long long ipos = static_cast<long long>(num / static_cast<unsigned long long>(dst));
    double frac = static_cast<double>(num % static_cast<unsigned long long>(dst)) / static_cast<double>(dst);

    double fphase = frac * kernel.phases;
    int p0 = static_cast<int>(fphase);
    double blend = fphase - p0;
    const double* row0 = &kernel.taps[static_cast<size_t>(p0) * static_cast<size_t>(width)];
    const double* row1 = row0 + width;

    long long k0 = ipos - kernel.half_width + 1;
    double acc = 0.0;
    for (int t = 0; t < width; ++t) {
      long long k = k0 + t;
      if (k < 0 || k >= n) continue;  // zero beyond the clip
      double tap = row0[t] + blend * (row1[t] - row0[t]);
      acc += tap * static_cast<double>(clip.samples[static_cast<size_t>(k)]);
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

PowerSpectrogram stft_power(const AudioClip& clip, const FrontendConfig& cfg) {
  cfg.validate();
  validate_clip(clip);
  if (clip.sample_rate_hz != cfg.target_rate_hz) {
    raise(ErrorKind::InvalidInput,
          strprintf("clip rate %d does not match frontend rate %d", clip.sample_rate_hz,
                    cfg.target_rate_hz));
  }
  const size_t n = clip.samples.size();
  if (n < static_cast<size_t>(cfg.hop_samples)) {
    raise(ErrorKind::InvalidInput,
          strprintf("clip of %zu samples is shorter than one hop (%d)", n, cfg.hop_samples));
  }

  const int window = cfg.window_samples;
  const int pad = window / 2;
  const int frames = frame_count(n, cfg.hop_samples);
  const int bins = cfg.fft_size / 2 + 1;

  std::vector<double> window_fn(static_cast<size_t>(window), 1.0);
  if (!cfg.rectangular_window) {
    for (int j = 0; j < window; ++j) {
      window_fn[static_cast<size_t>(j)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * j / window);
    }
  }

  PowerSpectrogram out;
  out.bins = bins;
  out.frames = frames;
  out.values.assign(static_cast<size_t>(bins) * static_cast<size_t>(frames), 0.0);

  RealFft fft(cfg.fft_size);
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  std::vector<std::complex<double>> spectrum(static_cast<size_t>(bins));

  for (int m = 0; m < frames; ++m) {
    long long start = static_cast<long long>(m) * cfg.hop_samples - pad;
    for (int j = 0; j < window; ++j) {
      size_t src = reflect_index(start + j, n);
      frame[static_cast<size_t>(j)] =
          static_cast<double>(clip.samples[src]) * window_fn[static_cast<size_t>(j)];
    }
    std::fill(frame.begin() + window, frame.end(), 0.0);
    fft.forward(frame.data(), spectrum.data());
    for (int k = 0; k < bins; ++k) {
      out.values[static_cast<size_t>(k) * static_cast<size_t>(frames) + static_cast<size_t>(m)] =
          std::norm(spectrum[static_cast<size_t>(k)]);
    }
  }
  return out;
}

MelFilterbank mel_filterbank(const FrontendConfig& cfg) {
  cfg.validate();
  const int bins = cfg.fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(cfg.target_rate_hz) / cfg.fft_size;

  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax());
  const double step = (mel_hi - mel_lo) / (cfg.mel_bins + 1);

  std::vector<double> edges_hz(static_cast<size_t>(cfg.mel_bins) + 2);
  for (int i = 0; i < cfg.mel_bins + 2; ++i) {
    edges_hz[static_cast<size_t>(i)] = mel_to_hz(mel_lo + step * i);
  }

  MelFilterbank fb;
  fb.mel_bins = cfg.mel_bins;
  fb.fft_bins = bins;
  fb.rows.resize(static_cast<size_t>(cfg.mel_bins));
  fb.center_hz.resize(static_cast<size_t>(cfg.mel_bins));

  for (int m = 0; m < cfg.mel_bins; ++m) {
    double lo = edges_hz[static_cast<size_t>(m)];
    double center = edges_hz[static_cast<size_t>(m) + 1];
    double hi = edges_hz[static_cast<size_t>(m) + 2];
    fb.center_hz[static_cast<size_t>(m)] = center;

    int k_lo = std::max(0, static_cast<int>(std::ceil(lo / bin_hz)));
    int k_hi = std::min(bins - 1, static_cast<int>(std::floor(hi / bin_hz)));

    MelFilterbank::Row row;
    std::vector<double> weights;
    int first = -1;
    for (int k = k_lo; k <= k_hi; ++k) {
      double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      if (w > 0.0) {
        if (first < 0) first = k;
        weights.push_back(w);
      } else if (first >= 0) {
        break;  // triangle support is contiguous
      }
    }
    if (first < 0) {
      raise(ErrorKind::Config,
            strprintf("mel filter %d has no positive FFT bin; mel_bins=%d exceeds the FFT resolution",
                      m, cfg.mel_bins));
    }
    row.first_bin = first;
    row.weights = std::move(weights);
    fb.rows[static_cast<size_t>(m)] = std::move(row);
  }
  return fb;
}

std::vector<double> MelFilterbank::dense() const {
  std::vector<double> mat(static_cast<size_t>(mel_bins) * static_cast<size_t>(fft_bins), 0.0);
  for (int m = 0; m < mel_bins; ++m) {
    const Row& row = rows[static_cast<size_t>(m)];
    for (size_t j = 0; j < row.weights.size(); ++j) {
      mat[static_cast<size_t>(m) * static_cast<size_t>(fft_bins) +
          static_cast<size_t>(row.first_bin) + j] = row.weights[j];
    }
  }
  return mat;
}

MelSpectrogram compute_mel(const AudioClip& clip, const FrontendConfig& cfg) {
  cfg.validate();
  validate_clip(clip);

  const AudioClip* source = &clip;
  AudioClip resampled;
  if (clip.sample_rate_hz != cfg.target_rate_hz) {
    resampled = resample(clip, cfg.target_rate_hz);
    source = &resampled;
  }

  PowerSpectrogram power = stft_power(*source, cfg);
  MelFilterbank fb = mel_filterbank(cfg);

  MelSpectrogram mel;
  mel.mel_bins = cfg.mel_bins;
  mel.frames = power.frames;
  mel.config_fingerprint = cfg.fingerprint();
  mel.values.resize(static_cast<size_t>(cfg.mel_bins) * static_cast<size_t>(power.frames));

  const int frames = power.frames;
  std::vector<double> acc(static_cast<size_t>(frames));
  const double floor_val = cfg.log_floor;
  for (int m = 0; m < cfg.mel_bins; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const MelFilterbank::Row& row = fb.rows[static_cast<size_t>(m)];
    for (size_t j = 0; j < row.weights.size(); ++j) {
      const double w = row.weights[j];
      const double* p = &power.values[(static_cast<size_t>(row.first_bin) + j) *
                                      static_cast<size_t>(frames)];
      for (int t = 0; t < frames; ++t) acc[static_cast<size_t>(t)] += w * p[t];
    }
    float* dst = &mel.values[static_cast<size_t>(m) * static_cast<size_t>(frames)];
    for (int t = 0; t < frames; ++t) {
      dst[t] = static_cast<float>(std::log(std::max(acc[static_cast<size_t>(t)], floor_val)));
    }
  }
  return mel;
}

}  // namespace scenewise
