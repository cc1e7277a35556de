#pragma once

#include <cstdint>

#include "scenewise/params.hpp"

namespace scenewise {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.004;
};

struct AdamWState {
  ParamStore m;  // first moments, learnable tensors only
  ParamStore v;  // second moments
  int64_t step = 0;
};

AdamWState make_adamw_state(const ParamStore& params);

// One decoupled-weight-decay Adam step. Weight decay is applied directly to
// the parameters, separately from the adaptive update. Throws on non-finite
// gradients, naming the offending tensor.
void adamw_step(AdamWState& state, ParamStore& params, const ParamStore& grads, double lr,
                const AdamWConfig& cfg);

// Linear warmup over the first warmup_frac of steps, then cosine decay from
// the peak down to final_frac * peak.
struct LrSchedule {
  double peak = 0.005;
  int64_t total_steps = 1;
  double warmup_frac = 0.1;
  double final_frac = 0.01;

  double at(int64_t step) const;  // step is 0-based
};

}  // namespace scenewise
