#include "scenewise/mixstyle.hpp"

#include <cmath>
#include <numeric>

#include "scenewise/common.hpp"

namespace scenewise {

namespace {
constexpr double kStatEps = 1e-6;  // keeps std finite on constant bins
}

void FreqMixStyleConfig::validate() const {
  if (alpha <= 0.0) raise(ErrorKind::Config, "Freq-MixStyle alpha must be > 0");
  if (probability < 0.0 || probability > 1.0) {
    raise(ErrorKind::Config, "Freq-MixStyle probability must be in [0, 1]");
  }
}

Tensor apply_freq_mixstyle(const Tensor& batch, double lambda,
                           const std::vector<size_t>& partner) {
  const int n_batch = batch.shape[0], c = batch.shape[1], f = batch.shape[2], t = batch.shape[3];
  if (partner.size() != static_cast<size_t>(n_batch)) {
    raise(ErrorKind::InvalidInput, "partner permutation size does not match batch");
  }
  const size_t plane = static_cast<size_t>(f) * t;
  const size_t sample = static_cast<size_t>(c) * plane;

  // per-sample, per-frequency-bin statistics over (channels, time)
  std::vector<double> mean(static_cast<size_t>(n_batch) * f);
  std::vector<double> stdev(static_cast<size_t>(n_batch) * f);
  const double count = static_cast<double>(c) * t;
  for (int n = 0; n < n_batch; ++n) {
    for (int fi = 0; fi < f; ++fi) {
      double sum = 0.0, sum_sq = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const float* row = batch.data() + static_cast<size_t>(n) * sample +
                           static_cast<size_t>(ch) * plane + static_cast<size_t>(fi) * t;
        for (int ti = 0; ti < t; ++ti) {
          const double x = static_cast<double>(row[ti]);
          sum += x;
          sum_sq += x * x;
        }
      }
      const double mu = sum / count;
      const double var = std::max(0.0, sum_sq / count - mu * mu);
      mean[static_cast<size_t>(n) * f + fi] = mu;
      stdev[static_cast<size_t>(n) * f + fi] = std::sqrt(var + kStatEps);
    }
  }

  Tensor out;
  out.shape = batch.shape;
  out.v.resize(batch.v.size());
  for (int n = 0; n < n_batch; ++n) {
    const size_t j = partner[static_cast<size_t>(n)];
    for (int fi = 0; fi < f; ++fi) {
      const double mu_i = mean[static_cast<size_t>(n) * f + fi];
      const double sd_i = stdev[static_cast<size_t>(n) * f + fi];
      const double mu_j = mean[j * f + fi];
      const double sd_j = stdev[j * f + fi];
      const double mu_mix = lambda * mu_i + (1.0 - lambda) * mu_j;
      const double sd_mix = lambda * sd_i + (1.0 - lambda) * sd_j;
      const double scale = sd_mix / sd_i;
      for (int ch = 0; ch < c; ++ch) {
        const size_t off = static_cast<size_t>(n) * sample + static_cast<size_t>(ch) * plane +
                           static_cast<size_t>(fi) * t;
        const float* src = batch.data() + off;
        float* dst = out.data() + off;
        for (int ti = 0; ti < t; ++ti) {
          dst[ti] = static_cast<float>((static_cast<double>(src[ti]) - mu_i) * scale + mu_mix);
        }
      }
    }
  }
  return out;
}

Tensor freq_mixstyle(const Tensor& batch, const FreqMixStyleConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n_batch = batch.shape[0];
  if (n_batch < 2) return batch;
  if (!rng.bernoulli(cfg.probability)) return batch;

  const double lambda = rng.beta(cfg.alpha, cfg.alpha);
  std::vector<size_t> partner(static_cast<size_t>(n_batch));
  std::iota(partner.begin(), partner.end(), size_t{0});
  rng.shuffle(partner);
  return apply_freq_mixstyle(batch, lambda, partner);
}

}  // namespace scenewise
