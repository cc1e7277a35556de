#include "scenewise/adamw.hpp"

#include <cmath>

#include "scenewise/common.hpp"

namespace scenewise {

AdamWState make_adamw_state(const ParamStore& params) {
  AdamWState state;
  state.m = make_grad_store(params);
  state.v = make_grad_store(params);
  state.step = 0;
  return state;
}

void adamw_step(AdamWState& state, ParamStore& params, const ParamStore& grads, double lr,
                const AdamWConfig& cfg) {
  if (lr < 0.0) raise(ErrorKind::Config, "learning rate must be >= 0");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (size_t li = 0; li < params.layers.size(); ++li) {
    for (auto& [name, grad] : grads.layers[li]) {
      Tensor& theta = params.layers[li].at(name);
      Tensor& m = state.m.layers[li].at(name);
      Tensor& v = state.v.layers[li].at(name);
      for (size_t i = 0; i < grad.v.size(); ++i) {
        const double g = static_cast<double>(grad.v[i]);
        if (!std::isfinite(g)) {
          raise(ErrorKind::InvalidInput,
                strprintf("non-finite gradient in layer%zu.%s[%zu]", li, name.c_str(), i));
        }
        double mi = cfg.beta1 * static_cast<double>(m.v[i]) + (1.0 - cfg.beta1) * g;
        double vi = cfg.beta2 * static_cast<double>(v.v[i]) + (1.0 - cfg.beta2) * g * g;
        m.v[i] = static_cast<float>(mi);
        v.v[i] = static_cast<float>(vi);
        double theta_i = static_cast<double>(theta.v[i]);
        theta_i -= lr * cfg.weight_decay * theta_i;  // decoupled decay
        theta_i -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
        theta.v[i] = static_cast<float>(theta_i);
      }
    }
  }
}

double LrSchedule::at(int64_t step) const {
  if (total_steps <= 0) return peak;
  auto warmup_steps = static_cast<int64_t>(warmup_frac * static_cast<double>(total_steps));
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double final_lr = final_frac * peak;
  const int64_t decay_steps = total_steps - warmup_steps;
  if (decay_steps <= 1) return final_lr;
  double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps - 1);
  progress = std::min(1.0, std::max(0.0, progress));
  return final_lr + (peak - final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace scenewise
