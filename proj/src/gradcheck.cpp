#include "scenewise/gradcheck.hpp"

#include <cmath>

#include "scenewise/common.hpp"

namespace scenewise {

namespace {

double loss_at(const ModelGraph& graph, ParamStoreT<double>& params,
               const TensorT<double>& input, const std::vector<int>& labels) {
  ActivationsT<double> acts;
  const TensorT<double>& logits = forward_train(graph, params, input, acts, false);
  return softmax_cross_entropy(logits, labels, static_cast<TensorT<double>*>(nullptr));
}

}  // namespace

GradCheckResult gradient_check(const ModelGraph& graph, const ParamStore& params,
                               const Tensor& input, const std::vector<int>& labels, double step) {
  validate_graph(graph);
  ParamStoreT<double> p64 = params.cast<double>();
  TensorT<double> in64 = input.cast<double>();

  // analytic gradients at the base point
  ActivationsT<double> acts;
  const TensorT<double>& logits = forward_train(graph, p64, in64, acts, false);
  TensorT<double> grad_logits;
  softmax_cross_entropy(logits, labels, &grad_logits);
  ParamStoreT<double> grads;
  grads.layers.resize(p64.layers.size());
  for (size_t i = 0; i < p64.layers.size(); ++i) {
    for (const auto& [name, tensor] : p64.layers[i]) {
      if (!is_learnable(name)) continue;
      TensorT<double> g;
      g.shape = tensor.shape;
      g.v.assign(tensor.v.size(), 0.0);
      grads.layers[i].emplace(name, std::move(g));
    }
  }
  model_backward(graph, p64, in64, acts, grad_logits, grads);

  GradCheckResult result;
  for (size_t li = 0; li < p64.layers.size(); ++li) {
    for (auto& [name, tensor] : p64.layers[li]) {
      if (!is_learnable(name)) continue;
      const TensorT<double>& analytic = grads.layers[li].at(name);
      for (size_t j = 0; j < tensor.v.size(); ++j) {
        const double original = tensor.v[j];
        tensor.v[j] = original + step;
        const double f_plus = loss_at(graph, p64, in64, labels);
        tensor.v[j] = original - step;
        const double f_minus = loss_at(graph, p64, in64, labels);
        tensor.v[j] = original;

        const double numeric = (f_plus - f_minus) / (2.0 * step);
        const double a = analytic.v[j];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1.0});
        const double rel = std::abs(a - numeric) / denom;
        ++result.checked;
        if (rel > result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_tensor = strprintf("layer%zu.%s[%zu]", li, name.c_str(), j);
        }
      }
    }
  }
  return result;
}

}  // namespace scenewise
