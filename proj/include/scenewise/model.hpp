#pragma once

#include <string>
#include <vector>

#include "scenewise/layers.hpp"
#include "scenewise/params.hpp"

namespace scenewise {

enum class BnMode { Train, Eval };

template <class T>
struct ActivationsT {
  std::vector<TensorT<T>> out;       // output of each layer
  std::vector<BnCacheT<T>> bn;       // populated for batchnorm layers
};

using Activations = ActivationsT<float>;

namespace detail {

template <class T>
void run_forward(const ModelGraph& graph, const ParamStoreT<T>& params,
                 ParamStoreT<T>* mutable_params, const TensorT<T>& input, BnMode mode,
                 bool update_running, ActivationsT<T>& acts) {
  const size_t n_layers = graph.layers.size();
  acts.out.resize(n_layers);
  acts.bn.assign(n_layers, BnCacheT<T>{});

  const TensorT<T>* cur = &input;
  for (size_t i = 0; i < n_layers; ++i) {
    const LayerSpec& spec = graph.layers[i];
    const LayerParamsT<T>& lp = params.layers[i];
    TensorT<T>& out = acts.out[i];
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        const TensorT<T>* bias = spec.bias ? &lp.at("bias") : nullptr;
        conv2d_forward(*cur, spec, lp.at("weight"), bias, out);
        break;
      }
      case LayerKind::BatchNorm2d: {
        TensorT<T>* rm;
        TensorT<T>* rv;
        if (mutable_params != nullptr) {
          rm = &mutable_params->layers[i].at("running_mean");
          rv = &mutable_params->layers[i].at("running_var");
        } else {
          // eval mode only reads the running statistics
          rm = const_cast<TensorT<T>*>(&lp.at("running_mean"));
          rv = const_cast<TensorT<T>*>(&lp.at("running_var"));
        }
        batchnorm_forward(*cur, lp.at("gamma"), lp.at("beta"), rm, rv, mode == BnMode::Train,
                          update_running && mutable_params != nullptr, out, acts.bn[i]);
        break;
      }
      case LayerKind::Relu:
        relu_forward(*cur, out);
        break;
      case LayerKind::AvgPool2d:
        avg_pool_forward(*cur, spec, out);
        break;
      case LayerKind::GlobalAvgPool:
        global_avg_pool_forward(*cur, out);
        break;
      case LayerKind::Linear:
        linear_forward(*cur, spec, lp.at("weight"), lp.at("bias"), out);
        break;
    }
    cur = &out;
  }
}

}  // namespace detail

// Training forward: batch statistics in batchnorm, activations cached for the
// backward pass. Updates running statistics unless told otherwise.
template <class T>
const TensorT<T>& forward_train(const ModelGraph& graph, ParamStoreT<T>& params,
                                const TensorT<T>& input, ActivationsT<T>& acts,
                                bool update_running = true) {
  detail::run_forward(graph, params, &params, input, BnMode::Train, update_running, acts);
  return acts.out.back();
}

// Inference forward: running statistics, no caching side effects.
template <class T>
TensorT<T> forward_eval(const ModelGraph& graph, const ParamStoreT<T>& params,
                        const TensorT<T>& input) {
  ActivationsT<T> acts;
  detail::run_forward(graph, params, static_cast<ParamStoreT<T>*>(nullptr), input, BnMode::Eval,
                      false, acts);
  return std::move(acts.out.back());
}

// Backward through the whole graph; accumulates into `grads` (which must come
// from make_grad_store-like initialization). Expects the activations of the
// matching forward_train call.
template <class T>
void model_backward(const ModelGraph& graph, const ParamStoreT<T>& params,
                    const TensorT<T>& input, const ActivationsT<T>& acts,
                    const TensorT<T>& grad_logits, ParamStoreT<T>& grads,
                    TensorT<T>* grad_input = nullptr) {
  const size_t n_layers = graph.layers.size();
  TensorT<T> grad_a = grad_logits;
  TensorT<T> grad_b;
  TensorT<T>* grad_cur = &grad_a;
  TensorT<T>* grad_next = &grad_b;

  for (size_t idx = n_layers; idx-- > 0;) {
    const LayerSpec& spec = graph.layers[idx];
    const LayerParamsT<T>& lp = params.layers[idx];
    const TensorT<T>& layer_in = idx == 0 ? input : acts.out[idx - 1];
    const bool need_input_grad = idx > 0 || grad_input != nullptr;

    switch (spec.kind) {
      case LayerKind::Conv2d: {
        TensorT<T>* gb = spec.bias ? &grads.layers[idx].at("bias") : nullptr;
        conv2d_backward(layer_in, spec, lp.at("weight"), *grad_cur,
                        grads.layers[idx].at("weight"), gb,
                        need_input_grad ? grad_next : nullptr);
        break;
      }
      case LayerKind::BatchNorm2d:
        batchnorm_backward(layer_in, lp.at("gamma"), acts.bn[idx], *grad_cur, true,
                           grads.layers[idx].at("gamma"), grads.layers[idx].at("beta"),
                           *grad_next);
        break;
      case LayerKind::Relu:
        relu_backward(layer_in, *grad_cur, *grad_next);
        break;
      case LayerKind::AvgPool2d:
        avg_pool_backward(layer_in, spec, *grad_cur, *grad_next);
        break;
      case LayerKind::GlobalAvgPool:
        global_avg_pool_backward(layer_in, *grad_cur, *grad_next);
        break;
      case LayerKind::Linear:
        linear_backward(layer_in, spec, lp.at("weight"), *grad_cur,
                        grads.layers[idx].at("weight"), grads.layers[idx].at("bias"), *grad_next);
        break;
    }
    std::swap(grad_cur, grad_next);
    // after swap, grad_cur points at the gradient flowing into layer idx's input
  }
  if (grad_input != nullptr) *grad_input = *grad_cur;
}

// Mean softmax cross-entropy over the batch; logits (N, classes[,1,1]).
// Loss and probabilities are evaluated in double regardless of T.
template <class T>
double softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels,
                             TensorT<T>* grad_logits) {
  const int n_batch = logits.shape[0];
  const int classes = static_cast<int>(logits.v.size() / static_cast<size_t>(n_batch));
  if (static_cast<size_t>(n_batch) != labels.size()) {
    raise(ErrorKind::InvalidInput, "label count does not match batch size");
  }
  if (grad_logits != nullptr) {
    grad_logits->shape = logits.shape;
    grad_logits->v.resize(logits.v.size());
  }

  double total = 0.0;
  for (int n = 0; n < n_batch; ++n) {
    const int label = labels[static_cast<size_t>(n)];
    if (label < 0 || label >= classes) {
      raise(ErrorKind::InvalidInput, strprintf("label %d out of range [0, %d)", label, classes));
    }
    const T* row = logits.data() + static_cast<size_t>(n) * classes;
    double max_logit = static_cast<double>(row[0]);
    for (int k = 1; k < classes; ++k) max_logit = std::max(max_logit, static_cast<double>(row[k]));
    double sum_exp = 0.0;
    for (int k = 0; k < classes; ++k) sum_exp += std::exp(static_cast<double>(row[k]) - max_logit);
    const double log_sum = max_logit + std::log(sum_exp);
    total += log_sum - static_cast<double>(row[label]);

    if (grad_logits != nullptr) {
      T* g = grad_logits->data() + static_cast<size_t>(n) * classes;
      for (int k = 0; k < classes; ++k) {
        double p = std::exp(static_cast<double>(row[k]) - log_sum);
        if (k == label) p -= 1.0;
        g[k] = static_cast<T>(p / static_cast<double>(n_batch));
      }
    }
  }
  return total / static_cast<double>(n_batch);
}

// Probabilities for one logits row, computed in double.
template <class T>
std::vector<double> softmax_row(const T* logits, int classes) {
  double max_logit = static_cast<double>(logits[0]);
  for (int k = 1; k < classes; ++k) max_logit = std::max(max_logit, static_cast<double>(logits[k]));
  double sum_exp = 0.0;
  std::vector<double> probs(static_cast<size_t>(classes));
  for (int k = 0; k < classes; ++k) {
    probs[static_cast<size_t>(k)] = std::exp(static_cast<double>(logits[k]) - max_logit);
    sum_exp += probs[static_cast<size_t>(k)];
  }
  for (double& p : probs) p /= sum_exp;
  return probs;
}

}  // namespace scenewise
