#pragma once

#include <vector>

#include "scenewise/rng.hpp"
#include "scenewise/tensor.hpp"

namespace scenewise {

struct FreqMixStyleConfig {
  double alpha = 0.3;        // Beta concentration
  double probability = 0.4;  // per-batch application probability

  void validate() const;
};

// Mixes per-sample, per-frequency-bin statistics (mean/std over channels and
// time) between random partner pairs, with one lambda ~ Beta(alpha, alpha)
// per application. Batches smaller than 2 pass through unchanged.
Tensor freq_mixstyle(const Tensor& batch, const FreqMixStyleConfig& cfg, Rng& rng);

// Deterministic core used by the tests: explicit lambda and partner
// permutation (partner[i] = j restyles sample i with sample j's statistics).
Tensor apply_freq_mixstyle(const Tensor& batch, double lambda,
                           const std::vector<size_t>& partner);

}  // namespace scenewise
