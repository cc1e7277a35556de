#pragma once

#include <string>
#include <vector>

#include "scenewise/model.hpp"

namespace scenewise {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  size_t checked = 0;
};

// Compares the analytic gradient of the mean cross-entropy loss with central
// differences, coordinate by coordinate, over every learnable parameter.
// Parameters come in at fp32 but all evaluation runs in 64-bit; batchnorm
// runs in train mode without touching the running statistics. The error for
// one coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1).
GradCheckResult gradient_check(const ModelGraph& graph, const ParamStore& params,
                               const Tensor& input, const std::vector<int>& labels,
                               double step = 1e-3);

}  // namespace scenewise
