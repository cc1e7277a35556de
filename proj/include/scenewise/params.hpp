#pragma once

#include <map>
#include <string>
#include <vector>

#include "scenewise/graph.hpp"
#include "scenewise/rng.hpp"
#include "scenewise/tensor.hpp"

namespace scenewise {

enum class Precision { Fp32, Fp16 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);
int precision_bits(Precision p);

// Named tensors for one layer, ordered by name for deterministic traversal.
template <class T>
using LayerParamsT = std::map<std::string, TensorT<T>>;

template <class T>
struct ParamStoreT {
  std::vector<LayerParamsT<T>> layers;
  Precision precision = Precision::Fp32;

  template <class U>
  ParamStoreT<U> cast() const {
    ParamStoreT<U> out;
    out.precision = precision;
    out.layers.resize(layers.size());
    for (size_t i = 0; i < layers.size(); ++i) {
      for (const auto& [name, tensor] : layers[i]) {
        out.layers[i].emplace(name, tensor.template cast<U>());
      }
    }
    return out;
  }
};

using ParamStore = ParamStoreT<float>;

// Running statistics are state, not learnable parameters.
bool is_learnable(const std::string& tensor_name);

// Kaiming-uniform fan-in weights, zero biases/beta, unit gamma.
ParamStore init_params(const ModelGraph& graph, Rng& rng);

// Zero-filled gradient slots matching every learnable tensor.
ParamStore make_grad_store(const ParamStore& params);

// Rounds every tensor through the target precision. fp16 saturates values
// beyond the half range to +/-max-finite and reports how many.
ParamStore quantize_store(const ParamStore& params, Precision precision,
                          size_t* saturated_count = nullptr);

size_t param_count(const ParamStore& params);

// Exact elementwise equality (used by determinism and round-trip checks).
bool stores_equal(const ParamStore& a, const ParamStore& b, bool include_running_stats = true);

}  // namespace scenewise
