#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "scenewise/common.hpp"
#include "scenewise/graph.hpp"
#include "scenewise/tensor.hpp"

namespace scenewise {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// ---------------------------------------------------------------------------
// conv2d: cross-correlation with zero padding, optional channel groups.
// Activations are (N, C, F, T) row-major with time contiguous.
// ---------------------------------------------------------------------------

template <class T>
void conv2d_forward(const TensorT<T>& in, const LayerSpec& s, const TensorT<T>& weight,
                    const TensorT<T>* bias, TensorT<T>& out) {
  const int n_batch = in.shape[0], c_in = in.shape[1], f_in = in.shape[2], t_in = in.shape[3];
  const int c_out = s.out_channels;
  const int icg = c_in / s.groups;
  const int ocg = c_out / s.groups;
  const int f_out = (f_in + 2 * s.pf - s.kf) / s.sf + 1;
  const int t_out = (t_in + 2 * s.pt - s.kt) / s.st + 1;

  out.shape = {n_batch, c_out, f_out, t_out};
  out.v.resize(static_cast<size_t>(n_batch) * c_out * f_out * t_out);

  const size_t in_plane = static_cast<size_t>(f_in) * t_in;
  const size_t out_plane = static_cast<size_t>(f_out) * t_out;

  // pointwise stride-1 convolutions reduce to long per-plane axpy loops
  const bool pointwise = s.kf == 1 && s.kt == 1 && s.sf == 1 && s.st == 1 && s.pf == 0 && s.pt == 0;

  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < c_out; ++oc) {
      const int g = oc / ocg;
      T* out_base = out.data() + (static_cast<size_t>(n) * c_out + oc) * out_plane;
      {
        const T b = bias != nullptr ? bias->v[static_cast<size_t>(oc)] : T(0);
        for (size_t i = 0; i < out_plane; ++i) out_base[i] = b;
      }
      if (pointwise) {
        const T* w_row = weight.data() + static_cast<size_t>(oc) * icg;
        for (int ii = 0; ii < icg; ++ii) {
          const int ic = g * icg + ii;
          const T* in_base = in.data() + (static_cast<size_t>(n) * c_in + ic) * in_plane;
          const T w = w_row[ii];
          for (size_t i = 0; i < out_plane; ++i) out_base[i] += w * in_base[i];
        }
        continue;
      }
      for (int ii = 0; ii < icg; ++ii) {
        const int ic = g * icg + ii;
        const T* in_base = in.data() + (static_cast<size_t>(n) * c_in + ic) * in_plane;
        const T* w_base =
            weight.data() + ((static_cast<size_t>(oc) * icg + ii) * s.kf) * s.kt;
        for (int kf = 0; kf < s.kf; ++kf) {
          for (int of = 0; of < f_out; ++of) {
            const int fi = of * s.sf - s.pf + kf;
            if (fi < 0 || fi >= f_in) continue;
            const T* in_row = in_base + static_cast<size_t>(fi) * t_in;
            T* out_row = out_base + static_cast<size_t>(of) * t_out;
            for (int kt = 0; kt < s.kt; ++kt) {
              const T w = w_base[static_cast<size_t>(kf) * s.kt + kt];
              const int base = kt - s.pt;
              int lo = base < 0 ? (-base + s.st - 1) / s.st : 0;
              int hi = base <= t_in - 1 ? (t_in - 1 - base) / s.st + 1 : 0;
              hi = std::min(hi, t_out);
              if (s.st == 1) {
                const T* src = in_row + base;
                for (int ot = lo; ot < hi; ++ot) out_row[ot] += w * src[ot];
              } else {
                for (int ot = lo; ot < hi; ++ot) out_row[ot] += w * in_row[ot * s.st + base];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward(const TensorT<T>& in, const LayerSpec& s, const TensorT<T>& weight,
                     const TensorT<T>& grad_out, TensorT<T>& grad_weight, TensorT<T>* grad_bias,
                     TensorT<T>* grad_in) {
  const int n_batch = in.shape[0], c_in = in.shape[1], f_in = in.shape[2], t_in = in.shape[3];
  const int c_out = grad_out.shape[1], f_out = grad_out.shape[2], t_out = grad_out.shape[3];
  const int icg = c_in / s.groups;
  const int ocg = c_out / s.groups;

  const size_t in_plane = static_cast<size_t>(f_in) * t_in;
  const size_t out_plane = static_cast<size_t>(f_out) * t_out;

  if (grad_in != nullptr) {
    grad_in->shape = in.shape;
    grad_in->v.assign(in.v.size(), T(0));
  }

  if (grad_bias != nullptr) {
    for (int oc = 0; oc < c_out; ++oc) {
      T acc = T(0);
      for (int n = 0; n < n_batch; ++n) {
        const T* go = grad_out.data() + (static_cast<size_t>(n) * c_out + oc) * out_plane;
        for (size_t i = 0; i < out_plane; ++i) acc += go[i];
      }
      grad_bias->v[static_cast<size_t>(oc)] += acc;
    }
  }

  const bool pointwise = s.kf == 1 && s.kt == 1 && s.sf == 1 && s.st == 1 && s.pf == 0 && s.pt == 0;
  if (pointwise) {
    for (int n = 0; n < n_batch; ++n) {
      for (int oc = 0; oc < c_out; ++oc) {
        const int g = oc / ocg;
        const T* go_base = grad_out.data() + (static_cast<size_t>(n) * c_out + oc) * out_plane;
        for (int ii = 0; ii < icg; ++ii) {
          const int ic = g * icg + ii;
          const T* in_base = in.data() + (static_cast<size_t>(n) * c_in + ic) * in_plane;
          const size_t w_idx = static_cast<size_t>(oc) * icg + ii;
          const T w = weight.v[w_idx];
          T gw_acc = T(0);
          if (grad_in != nullptr) {
            T* gi_base = grad_in->data() + (static_cast<size_t>(n) * c_in + ic) * in_plane;
            for (size_t i = 0; i < out_plane; ++i) {
              const T go = go_base[i];
              gw_acc += go * in_base[i];
              gi_base[i] += w * go;
            }
          } else {
            for (size_t i = 0; i < out_plane; ++i) gw_acc += go_base[i] * in_base[i];
          }
          grad_weight.v[w_idx] += gw_acc;
        }
      }
    }
    return;
  }

  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < c_out; ++oc) {
      const int g = oc / ocg;
      const T* go_base = grad_out.data() + (static_cast<size_t>(n) * c_out + oc) * out_plane;
      for (int ii = 0; ii < icg; ++ii) {
        const int ic = g * icg + ii;
        const T* in_base = in.data() + (static_cast<size_t>(n) * c_in + ic) * in_plane;
        T* gi_base = grad_in != nullptr
                         ? grad_in->data() + (static_cast<size_t>(n) * c_in + ic) * in_plane
                         : nullptr;
        const size_t w_off = (static_cast<size_t>(oc) * icg + ii) * static_cast<size_t>(s.kf) * s.kt;
        for (int kf = 0; kf < s.kf; ++kf) {
          for (int of = 0; of < f_out; ++of) {
            const int fi = of * s.sf - s.pf + kf;
            if (fi < 0 || fi >= f_in) continue;
            const T* in_row = in_base + static_cast<size_t>(fi) * t_in;
            T* gi_row = gi_base != nullptr ? gi_base + static_cast<size_t>(fi) * t_in : nullptr;
            const T* go_row = go_base + static_cast<size_t>(of) * t_out;
            for (int kt = 0; kt < s.kt; ++kt) {
              const int base = kt - s.pt;
              int lo = base < 0 ? (-base + s.st - 1) / s.st : 0;
              int hi = base <= t_in - 1 ? (t_in - 1 - base) / s.st + 1 : 0;
              hi = std::min(hi, t_out);
              const size_t w_idx = w_off + static_cast<size_t>(kf) * s.kt + kt;
              const T w = weight.v[w_idx];
              T gw_acc = T(0);
              if (s.st == 1) {
                const T* src = in_row + base;
                if (gi_row != nullptr) {
                  T* gi = gi_row + base;
                  for (int ot = lo; ot < hi; ++ot) {
                    const T go = go_row[ot];
                    gw_acc += go * src[ot];
                    gi[ot] += w * go;
                  }
                } else {
                  for (int ot = lo; ot < hi; ++ot) gw_acc += go_row[ot] * src[ot];
                }
              } else {
                for (int ot = lo; ot < hi; ++ot) {
                  const T go = go_row[ot];
                  const int ti = ot * s.st + base;
                  gw_acc += go * in_row[ti];
                  if (gi_row != nullptr) gi_row[ti] += w * go;
                }
              }
              grad_weight.v[w_idx] += gw_acc;
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

template <class T>
struct BnCacheT {
  std::vector<T> mean;    // per channel, as used by the forward pass
  std::vector<T> invstd;  // 1 / sqrt(var + eps)
};

// Train mode normalizes with batch statistics and optionally updates the
// running estimates (momentum 0.1, unbiased running variance). Eval mode
// uses the stored running statistics.
template <class T>
void batchnorm_forward(const TensorT<T>& in, const TensorT<T>& gamma, const TensorT<T>& beta,
                       TensorT<T>* running_mean, TensorT<T>* running_var, bool train_mode,
                       bool update_running, TensorT<T>& out, BnCacheT<T>& cache) {
  const int n_batch = in.shape[0], c = in.shape[1], f = in.shape[2], t = in.shape[3];
  const size_t plane = static_cast<size_t>(f) * t;
  const size_t count = static_cast<size_t>(n_batch) * plane;

  out.shape = in.shape;
  out.v.resize(in.v.size());
  cache.mean.assign(static_cast<size_t>(c), T(0));
  cache.invstd.assign(static_cast<size_t>(c), T(0));

  for (int ch = 0; ch < c; ++ch) {
    double mean, var;
    if (train_mode) {
      double sum = 0.0, sum_sq = 0.0;
      for (int n = 0; n < n_batch; ++n) {
        const T* row = in.data() + (static_cast<size_t>(n) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double x = static_cast<double>(row[i]);
          sum += x;
          sum_sq += x * x;
        }
      }
      mean = sum / static_cast<double>(count);
      var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
      if (update_running && running_mean != nullptr && running_var != nullptr) {
        const double unbiased =
            count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
        running_mean->v[static_cast<size_t>(ch)] = static_cast<T>(
            (1.0 - kBnMomentum) * static_cast<double>(running_mean->v[static_cast<size_t>(ch)]) +
            kBnMomentum * mean);
        running_var->v[static_cast<size_t>(ch)] = static_cast<T>(
            (1.0 - kBnMomentum) * static_cast<double>(running_var->v[static_cast<size_t>(ch)]) +
            kBnMomentum * unbiased);
      }
    } else {
      mean = static_cast<double>(running_mean->v[static_cast<size_t>(ch)]);
      var = static_cast<double>(running_var->v[static_cast<size_t>(ch)]);
    }
    const double invstd = 1.0 / std::sqrt(var + kBnEps);
    cache.mean[static_cast<size_t>(ch)] = static_cast<T>(mean);
    cache.invstd[static_cast<size_t>(ch)] = static_cast<T>(invstd);

    const T scale = static_cast<T>(static_cast<double>(gamma.v[static_cast<size_t>(ch)]) * invstd);
    const T shift = static_cast<T>(static_cast<double>(beta.v[static_cast<size_t>(ch)]) -
                                   static_cast<double>(scale) * mean);
    for (int n = 0; n < n_batch; ++n) {
      const T* src = in.data() + (static_cast<size_t>(n) * c + ch) * plane;
      T* dst = out.data() + (static_cast<size_t>(n) * c + ch) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = scale * src[i] + shift;
    }
  }
}

template <class T>
void batchnorm_backward(const TensorT<T>& in, const TensorT<T>& gamma, const BnCacheT<T>& cache,
                        const TensorT<T>& grad_out, bool train_mode, TensorT<T>& grad_gamma,
                        TensorT<T>& grad_beta, TensorT<T>& grad_in) {
  const int n_batch = in.shape[0], c = in.shape[1], f = in.shape[2], t = in.shape[3];
  const size_t plane = static_cast<size_t>(f) * t;
  const double count = static_cast<double>(static_cast<size_t>(n_batch) * plane);

  grad_in.shape = in.shape;
  grad_in.v.resize(in.v.size());

  for (int ch = 0; ch < c; ++ch) {
    const double mean = static_cast<double>(cache.mean[static_cast<size_t>(ch)]);
    const double invstd = static_cast<double>(cache.invstd[static_cast<size_t>(ch)]);
    double sum_go = 0.0, sum_go_xhat = 0.0;
    for (int n = 0; n < n_batch; ++n) {
      const T* x = in.data() + (static_cast<size_t>(n) * c + ch) * plane;
      const T* go = grad_out.data() + (static_cast<size_t>(n) * c + ch) * plane;
      for (size_t i = 0; i < plane; ++i) {
        const double g = static_cast<double>(go[i]);
        sum_go += g;
        sum_go_xhat += g * (static_cast<double>(x[i]) - mean) * invstd;
      }
    }
    grad_gamma.v[static_cast<size_t>(ch)] += static_cast<T>(sum_go_xhat);
    grad_beta.v[static_cast<size_t>(ch)] += static_cast<T>(sum_go);

    const double gscale = static_cast<double>(gamma.v[static_cast<size_t>(ch)]) * invstd;
    if (train_mode) {
      const double mean_go = sum_go / count;
      const double mean_go_xhat = sum_go_xhat / count;
      for (int n = 0; n < n_batch; ++n) {
        const T* x = in.data() + (static_cast<size_t>(n) * c + ch) * plane;
        const T* go = grad_out.data() + (static_cast<size_t>(n) * c + ch) * plane;
        T* gi = grad_in.data() + (static_cast<size_t>(n) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double xhat = (static_cast<double>(x[i]) - mean) * invstd;
          gi[i] = static_cast<T>(gscale *
                                 (static_cast<double>(go[i]) - mean_go - xhat * mean_go_xhat));
        }
      }
    } else {
      for (int n = 0; n < n_batch; ++n) {
        const T* go = grad_out.data() + (static_cast<size_t>(n) * c + ch) * plane;
        T* gi = grad_in.data() + (static_cast<size_t>(n) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) gi[i] = static_cast<T>(gscale * static_cast<double>(go[i]));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// relu / pooling
// ---------------------------------------------------------------------------

template <class T>
void relu_forward(const TensorT<T>& in, TensorT<T>& out) {
  out.shape = in.shape;
  out.v.resize(in.v.size());
  for (size_t i = 0; i < in.v.size(); ++i) out.v[i] = in.v[i] > T(0) ? in.v[i] : T(0);
}

template <class T>
void relu_backward(const TensorT<T>& in, const TensorT<T>& grad_out, TensorT<T>& grad_in) {
  grad_in.shape = in.shape;
  grad_in.v.resize(in.v.size());
  for (size_t i = 0; i < in.v.size(); ++i) {
    grad_in.v[i] = in.v[i] > T(0) ? grad_out.v[i] : T(0);
  }
}

template <class T>
void avg_pool_forward(const TensorT<T>& in, const LayerSpec& s, TensorT<T>& out) {
  const int n_batch = in.shape[0], c = in.shape[1], f = in.shape[2], t = in.shape[3];
  const int f_out = (f - s.kf) / s.sf + 1;
  const int t_out = (t - s.kt) / s.st + 1;
  out.shape = {n_batch, c, f_out, t_out};
  out.v.resize(static_cast<size_t>(n_batch) * c * f_out * t_out);
  const T inv = T(1) / static_cast<T>(s.kf * s.kt);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = in.data() + (static_cast<size_t>(n) * c + ch) * f * t;
      T* dst = out.data() + (static_cast<size_t>(n) * c + ch) * f_out * t_out;
      for (int of = 0; of < f_out; ++of) {
        for (int ot = 0; ot < t_out; ++ot) {
          T acc = T(0);
          for (int kf = 0; kf < s.kf; ++kf) {
            const T* row = src + static_cast<size_t>(of * s.sf + kf) * t + ot * s.st;
            for (int kt = 0; kt < s.kt; ++kt) acc += row[kt];
          }
          dst[static_cast<size_t>(of) * t_out + ot] = acc * inv;
        }
      }
    }
  }
}

template <class T>
void avg_pool_backward(const TensorT<T>& in, const LayerSpec& s, const TensorT<T>& grad_out,
                       TensorT<T>& grad_in) {
  const int n_batch = in.shape[0], c = in.shape[1], f = in.shape[2], t = in.shape[3];
  const int f_out = grad_out.shape[2], t_out = grad_out.shape[3];
  grad_in.shape = in.shape;
  grad_in.v.assign(in.v.size(), T(0));
  const T inv = T(1) / static_cast<T>(s.kf * s.kt);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      T* gi = grad_in.data() + (static_cast<size_t>(n) * c + ch) * f * t;
      const T* go = grad_out.data() + (static_cast<size_t>(n) * c + ch) * f_out * t_out;
      for (int of = 0; of < f_out; ++of) {
        for (int ot = 0; ot < t_out; ++ot) {
          const T g = go[static_cast<size_t>(of) * t_out + ot] * inv;
          for (int kf = 0; kf < s.kf; ++kf) {
            T* row = gi + static_cast<size_t>(of * s.sf + kf) * t + ot * s.st;
            for (int kt = 0; kt < s.kt; ++kt) row[kt] += g;
          }
        }
      }
    }
  }
}

template <class T>
void global_avg_pool_forward(const TensorT<T>& in, TensorT<T>& out) {
  const int n_batch = in.shape[0], c = in.shape[1];
  const size_t plane = static_cast<size_t>(in.shape[2]) * in.shape[3];
  out.shape = {n_batch, c, 1, 1};
  out.v.resize(static_cast<size_t>(n_batch) * c);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = in.data() + (static_cast<size_t>(n) * c + ch) * plane;
      double acc = 0.0;
      for (size_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
      out.v[static_cast<size_t>(n) * c + ch] = static_cast<T>(acc / static_cast<double>(plane));
    }
  }
}

template <class T>
void global_avg_pool_backward(const TensorT<T>& in, const TensorT<T>& grad_out,
                              TensorT<T>& grad_in) {
  const int n_batch = in.shape[0], c = in.shape[1];
  const size_t plane = static_cast<size_t>(in.shape[2]) * in.shape[3];
  grad_in.shape = in.shape;
  grad_in.v.resize(in.v.size());
  const T inv = T(1) / static_cast<T>(plane);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const T g = grad_out.v[static_cast<size_t>(n) * c + ch] * inv;
      T* gi = grad_in.data() + (static_cast<size_t>(n) * c + ch) * plane;
      for (size_t i = 0; i < plane; ++i) gi[i] = g;
    }
  }
}

// ---------------------------------------------------------------------------
// linear (flattens whatever spatial extent remains)
// ---------------------------------------------------------------------------

template <class T>
void linear_forward(const TensorT<T>& in, const LayerSpec& s, const TensorT<T>& weight,
                    const TensorT<T>& bias, TensorT<T>& out) {
  const int n_batch = in.shape[0];
  const size_t in_features = in.v.size() / static_cast<size_t>(n_batch);
  out.shape = {n_batch, s.out_features, 1, 1};
  out.v.resize(static_cast<size_t>(n_batch) * s.out_features);
  for (int n = 0; n < n_batch; ++n) {
    const T* x = in.data() + static_cast<size_t>(n) * in_features;
    T* y = out.data() + static_cast<size_t>(n) * s.out_features;
    for (int o = 0; o < s.out_features; ++o) {
      const T* w = weight.data() + static_cast<size_t>(o) * in_features;
      T acc = bias.v[static_cast<size_t>(o)];
      for (size_t i = 0; i < in_features; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
}

template <class T>
void linear_backward(const TensorT<T>& in, const LayerSpec& s, const TensorT<T>& weight,
                     const TensorT<T>& grad_out, TensorT<T>& grad_weight, TensorT<T>& grad_bias,
                     TensorT<T>& grad_in) {
  const int n_batch = in.shape[0];
  const size_t in_features = in.v.size() / static_cast<size_t>(n_batch);
  grad_in.shape = in.shape;
  grad_in.v.assign(in.v.size(), T(0));
  for (int n = 0; n < n_batch; ++n) {
    const T* x = in.data() + static_cast<size_t>(n) * in_features;
    const T* go = grad_out.data() + static_cast<size_t>(n) * s.out_features;
    T* gi = grad_in.data() + static_cast<size_t>(n) * in_features;
    for (int o = 0; o < s.out_features; ++o) {
      const T g = go[o];
      grad_bias.v[static_cast<size_t>(o)] += g;
      T* gw = grad_weight.data() + static_cast<size_t>(o) * in_features;
      const T* w = weight.data() + static_cast<size_t>(o) * in_features;
      for (size_t i = 0; i < in_features; ++i) {
        gw[i] += g * x[i];
        gi[i] += g * w[i];
      }
    }
  }
}

}  // namespace scenewise
