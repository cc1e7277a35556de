#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace scenewise {

// Dense row-major tensor. Activations use (batch, channels, freq, time);
// weights use layer-specific shapes.
template <class T>
struct TensorT {
  std::vector<T> v;
  std::vector<int> shape;

  TensorT() = default;
  explicit TensorT(std::vector<int> dims) { reshape(std::move(dims)); }

  void reshape(std::vector<int> dims) {
    shape = std::move(dims);
    v.assign(numel_of(shape), T(0));
  }

  static size_t numel_of(const std::vector<int>& dims) {
    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return v.size(); }
  int dim(size_t i) const { return shape[i]; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

}  // namespace scenewise
