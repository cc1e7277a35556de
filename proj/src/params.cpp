#include "scenewise/params.hpp"

#include <cmath>

#include "scenewise/common.hpp"
#include "scenewise/fp16.hpp"

namespace scenewise {

const char* precision_name(Precision p) { return p == Precision::Fp16 ? "fp16" : "fp32"; }

Precision precision_from_name(const std::string& name) {
  if (name == "fp16") return Precision::Fp16;
  if (name == "fp32") return Precision::Fp32;
  raise(ErrorKind::Config, "unknown precision '" + name + "' (expected fp16 or fp32)");
}

int precision_bits(Precision p) { return p == Precision::Fp16 ? 16 : 32; }

bool is_learnable(const std::string& tensor_name) {
  return tensor_name == "weight" || tensor_name == "bias" || tensor_name == "gamma" ||
         tensor_name == "beta";
}

ParamStore init_params(const ModelGraph& graph, Rng& rng) {
  validate_graph(graph);
  ParamStore store;
  store.layers.resize(graph.layers.size());

  auto kaiming_uniform = [&rng](Tensor& w, int fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& x : w.v) x = static_cast<float>(rng.uniform(-bound, bound));
  };

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    LayerParamsT<float>& lp = store.layers[i];
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        int icg = spec.in_channels / spec.groups;
        Tensor w({spec.out_channels, icg, spec.kf, spec.kt});
        kaiming_uniform(w, icg * spec.kf * spec.kt);
        lp.emplace("weight", std::move(w));
        if (spec.bias) lp.emplace("bias", Tensor({spec.out_channels}));
        break;
      }
      case LayerKind::BatchNorm2d: {
        Tensor gamma({spec.channels});
        for (float& x : gamma.v) x = 1.0f;
        lp.emplace("gamma", std::move(gamma));
        lp.emplace("beta", Tensor({spec.channels}));
        lp.emplace("running_mean", Tensor({spec.channels}));
        Tensor rv({spec.channels});
        for (float& x : rv.v) x = 1.0f;
        lp.emplace("running_var", std::move(rv));
        break;
      }
      case LayerKind::Linear: {
        Tensor w({spec.out_features, spec.in_features});
        kaiming_uniform(w, spec.in_features);
        lp.emplace("weight", std::move(w));
        lp.emplace("bias", Tensor({spec.out_features}));
        break;
      }
      case LayerKind::Relu:
      case LayerKind::AvgPool2d:
      case LayerKind::GlobalAvgPool:
        break;
    }
  }
  return store;
}

ParamStore make_grad_store(const ParamStore& params) {
  ParamStore grads;
  grads.layers.resize(params.layers.size());
  for (size_t i = 0; i < params.layers.size(); ++i) {
    for (const auto& [name, tensor] : params.layers[i]) {
      if (!is_learnable(name)) continue;
      Tensor g;
      g.shape = tensor.shape;
      g.v.assign(tensor.v.size(), 0.0f);
      grads.layers[i].emplace(name, std::move(g));
    }
  }
  return grads;
}

ParamStore quantize_store(const ParamStore& params, Precision precision, size_t* saturated_count) {
  ParamStore out = params;
  out.precision = precision;
  size_t saturated = 0;
  if (precision == Precision::Fp16) {
    for (auto& layer : out.layers) {
      for (auto& [name, tensor] : layer) {
        (void)name;
        for (float& x : tensor.v) {
          bool sat = false;
          x = quantize_half(x, &sat);
          if (sat) ++saturated;
        }
      }
    }
    if (saturated > 0) {
      logging::info(strprintf("fp16 quantization saturated %zu value(s) to +/-65504", saturated));
    }
  }
  if (saturated_count != nullptr) *saturated_count = saturated;
  return out;
}

size_t param_count(const ParamStore& params) {
  size_t n = 0;
  for (const auto& layer : params.layers) {
    for (const auto& [name, tensor] : layer) {
      (void)name;
      n += tensor.numel();
    }
  }
  return n;
}

bool stores_equal(const ParamStore& a, const ParamStore& b, bool include_running_stats) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    for (const auto& [name, ta] : la) {
      if (!include_running_stats && !is_learnable(name)) continue;
      auto it = lb.find(name);
      if (it == lb.end()) return false;
      if (ta.shape != it->second.shape || ta.v != it->second.v) return false;
    }
    for (const auto& [name, tb] : lb) {
      (void)tb;
      if (!include_running_stats && !is_learnable(name)) continue;
      if (la.find(name) == la.end()) return false;
    }
  }
  return true;
}

}  // namespace scenewise
