#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scenewise/layers.hpp"
#include "scenewise/model.hpp"
#include "scenewise/rng.hpp"

using namespace scenewise;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& x : t.v) x = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

LayerSpec conv_spec(int in, int out, int kf, int kt, int sf, int st, int pf, int pt, int groups,
                    bool bias = true) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kf = kf;
  s.kt = kt;
  s.sf = sf;
  s.st = st;
  s.pf = pf;
  s.pt = pt;
  s.groups = groups;
  s.bias = bias;
  return s;
}

// independent six-nested-loop reference convolution
Tensor conv_reference(const Tensor& in, const LayerSpec& s, const Tensor& w, const Tensor* bias) {
  const int n_batch = in.shape[0], c_in = in.shape[1], f_in = in.shape[2], t_in = in.shape[3];
  const int icg = c_in / s.groups;
  const int ocg = s.out_channels / s.groups;
  const int f_out = (f_in + 2 * s.pf - s.kf) / s.sf + 1;
  const int t_out = (t_in + 2 * s.pt - s.kt) / s.st + 1;
  Tensor out({n_batch, s.out_channels, f_out, t_out});
  auto in_at = [&](int n, int c, int f, int t) -> double {
    if (f < 0 || f >= f_in || t < 0 || t >= t_in) return 0.0;
    return in.v[((static_cast<size_t>(n) * c_in + c) * f_in + f) * t_in + t];
  };
  for (int n = 0; n < n_batch; ++n) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int g = oc / ocg;
      for (int of = 0; of < f_out; ++of) {
        for (int ot = 0; ot < t_out; ++ot) {
          double acc = bias != nullptr ? bias->v[static_cast<size_t>(oc)] : 0.0;
          for (int ii = 0; ii < icg; ++ii) {
            for (int kf = 0; kf < s.kf; ++kf) {
              for (int kt = 0; kt < s.kt; ++kt) {
                const double wv =
                    w.v[((static_cast<size_t>(oc) * icg + ii) * s.kf + kf) * s.kt + kt];
                acc += wv * in_at(n, g * icg + ii, of * s.sf - s.pf + kf, ot * s.st - s.pt + kt);
              }
            }
          }
          out.v[((static_cast<size_t>(n) * s.out_channels + oc) * f_out + of) * t_out + ot] =
              static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("identity 1x1 convolution returns its input") {
  LayerSpec s = conv_spec(1, 1, 1, 1, 1, 1, 0, 0, 1);
  Tensor w({1, 1, 1, 1});
  w.v[0] = 1.0f;
  Tensor b({1});
  Rng rng(1);
  Tensor in = random_tensor({2, 1, 5, 7}, rng);
  Tensor out;
  conv2d_forward(in, s, w, &b, out);
  CHECK(out.shape == in.shape);
  for (size_t i = 0; i < in.v.size(); ++i) CHECK(out.v[i] == in.v[i]);
}

TEST_CASE("conv shape formula: 16x16 with 3x3 same padding stays 16x16") {
  LayerSpec s = conv_spec(1, 8, 3, 3, 1, 1, 1, 1, 1);
  Rng rng(2);
  Tensor in = random_tensor({1, 1, 16, 16}, rng);
  Tensor w = random_tensor({8, 1, 3, 3}, rng);
  Tensor b = random_tensor({8}, rng);
  Tensor out;
  conv2d_forward(in, s, w, &b, out);
  CHECK(out.shape == std::vector<int>{1, 8, 16, 16});
}

TEST_CASE("grouped factorized conv matches the six-loop reference") {
  LayerSpec s = conv_spec(2, 4, 3, 1, 1, 1, 1, 0, 2);
  Rng rng(3);
  Tensor in = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({4, 1, 3, 1}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor out;
  conv2d_forward(in, s, w, &b, out);
  Tensor expect = conv_reference(in, s, w, &b);
  REQUIRE(out.shape == expect.shape);
  for (size_t i = 0; i < out.v.size(); ++i) {
    CHECK(out.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv forward matches the reference across strides, pads, and groups") {
  Rng rng(4);
  struct Case {
    int in, out, kf, kt, sf, st, pf, pt, g;
  };
  for (const Case& c : {Case{1, 3, 3, 3, 1, 1, 1, 1, 1}, Case{4, 8, 3, 1, 2, 2, 1, 0, 4},
                        Case{8, 8, 1, 3, 1, 1, 0, 1, 4}, Case{6, 6, 1, 1, 1, 1, 0, 0, 1},
                        Case{4, 4, 5, 3, 2, 1, 2, 1, 2}}) {
    LayerSpec s = conv_spec(c.in, c.out, c.kf, c.kt, c.sf, c.st, c.pf, c.pt, c.g);
    Tensor in = random_tensor({2, c.in, 9, 11}, rng);
    Tensor w = random_tensor({c.out, c.in / c.g, c.kf, c.kt}, rng);
    Tensor b = random_tensor({c.out}, rng);
    Tensor out;
    conv2d_forward(in, s, w, &b, out);
    Tensor expect = conv_reference(in, s, w, &b);
    REQUIRE(out.shape == expect.shape);
    double worst = 0.0;
    for (size_t i = 0; i < out.v.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(out.v[i]) - expect.v[i]));
    }
    CAPTURE(c.kf);
    CAPTURE(c.g);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("batchnorm is a fixed point on zero-mean unit-variance input") {
  const int channels = 3;
  Rng rng(5);
  Tensor in = random_tensor({4, channels, 6, 5}, rng);
  // normalize each channel exactly (biased variance, like the layer)
  const size_t plane = 6 * 5;
  const size_t count = 4 * plane;
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int n = 0; n < 4; ++n) {
      float* p = in.data() + (static_cast<size_t>(n) * channels + c) * plane;
      for (size_t i = 0; i < plane; ++i) sum += p[i];
    }
    double mean = sum / static_cast<double>(count);
    for (int n = 0; n < 4; ++n) {
      float* p = in.data() + (static_cast<size_t>(n) * channels + c) * plane;
      for (size_t i = 0; i < plane; ++i) sum_sq += (p[i] - mean) * (p[i] - mean);
    }
    double sd = std::sqrt(sum_sq / static_cast<double>(count));
    for (int n = 0; n < 4; ++n) {
      float* p = in.data() + (static_cast<size_t>(n) * channels + c) * plane;
      for (size_t i = 0; i < plane; ++i) p[i] = static_cast<float>((p[i] - mean) / sd);
    }
  }

  Tensor gamma({channels}), beta({channels}), rm({channels}), rv({channels});
  for (float& g : gamma.v) g = 1.0f;
  Tensor out;
  BnCacheT<float> cache;
  batchnorm_forward(in, gamma, beta, &rm, &rv, true, true, out, cache);
  for (size_t i = 0; i < in.v.size(); ++i) {
    CHECK(out.v[i] == doctest::Approx(in.v[i]).epsilon(1e-5));
  }
}

TEST_CASE("constant channels collapse to beta") {
  const int channels = 2;
  Tensor in({2, channels, 4, 4});
  for (size_t i = 0; i < in.v.size(); ++i) in.v[i] = 3.25f;
  Tensor gamma({channels}), beta({channels}), rm({channels}), rv({channels});
  gamma.v = {2.0f, 0.5f};
  beta.v = {-1.0f, 4.0f};
  Tensor out;
  BnCacheT<float> cache;
  batchnorm_forward(in, gamma, beta, &rm, &rv, true, true, out, cache);
  const size_t plane = 16;
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < channels; ++c) {
      const float* p = out.data() + (static_cast<size_t>(n) * channels + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        CHECK(p[i] == doctest::Approx(beta.v[static_cast<size_t>(c)]).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("train-mode batchnorm output has mean beta and variance gamma^2") {
  const int channels = 4;
  Rng rng(6);
  Tensor in = random_tensor({8, channels, 7, 9}, rng, 2.0);
  Tensor gamma({channels}), beta({channels}), rm({channels}), rv({channels});
  gamma.v = {1.0f, 2.0f, 0.5f, 1.5f};
  beta.v = {0.0f, 1.0f, -2.0f, 0.25f};
  Tensor out;
  BnCacheT<float> cache;
  batchnorm_forward(in, gamma, beta, &rm, &rv, true, true, out, cache);

  const size_t plane = 7 * 9;
  const double count = 8.0 * plane;
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int n = 0; n < 8; ++n) {
      const float* p = out.data() + (static_cast<size_t>(n) * channels + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        sum += p[i];
        sum_sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double mean = sum / count;
    const double var = sum_sq / count - mean * mean;
    CHECK(mean == doctest::Approx(beta.v[static_cast<size_t>(c)]).epsilon(1e-4));
    const double g = gamma.v[static_cast<size_t>(c)];
    CHECK(var == doctest::Approx(g * g).epsilon(1e-3));
    // running statistics moved toward the batch statistics
    CHECK(rm.v[static_cast<size_t>(c)] ==
          doctest::Approx(kBnMomentum * cache.mean[static_cast<size_t>(c)]).epsilon(1e-4));
  }
}

TEST_CASE("eval mode uses running statistics") {
  const int channels = 1;
  Tensor in({1, channels, 2, 2});
  in.v = {1.0f, 2.0f, 3.0f, 4.0f};
  Tensor gamma({channels}), beta({channels}), rm({channels}), rv({channels});
  gamma.v = {1.0f};
  beta.v = {0.0f};
  rm.v = {2.0f};
  rv.v = {4.0f};
  Tensor out;
  BnCacheT<float> cache;
  batchnorm_forward(in, gamma, beta, &rm, &rv, false, false, out, cache);
  for (size_t i = 0; i < 4; ++i) {
    const double expect = (in.v[i] - 2.0) / std::sqrt(4.0 + kBnEps);
    CHECK(out.v[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("relu clamps negatives") {
  Tensor in({1, 1, 1, 3});
  in.v = {-1.0f, 0.0f, 2.0f};
  Tensor out;
  relu_forward(in, out);
  CHECK(out.v == std::vector<float>{0.0f, 0.0f, 2.0f});
}

TEST_CASE("global average pooling of a constant map is the constant") {
  Tensor in({2, 3, 4, 5});
  for (float& x : in.v) x = 0.625f;
  Tensor out;
  global_avg_pool_forward(in, out);
  CHECK(out.shape == std::vector<int>{2, 3, 1, 1});
  for (float v : out.v) CHECK(v == doctest::Approx(0.625f));
}

TEST_CASE("2x2 stride-2 average pooling of a 4x4 ramp matches hand-enumerated means") {
  Tensor in({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) in.v[static_cast<size_t>(i)] = static_cast<float>(i);
  LayerSpec s;
  s.kind = LayerKind::AvgPool2d;
  s.kf = s.kt = 2;
  s.sf = s.st = 2;
  Tensor out;
  avg_pool_forward(in, s, out);
  CHECK(out.shape == std::vector<int>{1, 1, 2, 2});
  // windows: {0,1,4,5} {2,3,6,7} {8,9,12,13} {10,11,14,15}
  CHECK(out.v == std::vector<float>{2.5f, 4.5f, 10.5f, 12.5f});
}

TEST_CASE("uniform logits lose ln(10) nats") {
  Tensor logits({4, 10, 1, 1});
  for (float& x : logits.v) x = 0.37f;
  std::vector<int> labels = {0, 3, 9, 5};
  double loss = softmax_cross_entropy(logits, labels, static_cast<Tensor*>(nullptr));
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-9));
}

TEST_CASE("a huge margin on the true class drives the loss to zero") {
  Tensor logits({1, 10, 1, 1});
  for (float& x : logits.v) x = 0.0f;
  logits.v[4] = 60.0f;
  double loss = softmax_cross_entropy(logits, {4}, static_cast<Tensor*>(nullptr));
  CHECK(loss < 1e-6);
  CHECK(loss >= 0.0);
}

TEST_CASE("cross-entropy gradient matches central finite differences") {
  Rng rng(7);
  Tensor logits = random_tensor({3, 6, 1, 1}, rng, 2.0);
  std::vector<int> labels = {1, 5, 0};
  Tensor grad;
  softmax_cross_entropy(logits, labels, &grad);

  const double h = 1e-4;
  for (size_t i = 0; i < logits.v.size(); ++i) {
    Tensor plus = logits, minus = logits;
    plus.v[i] += static_cast<float>(h);
    minus.v[i] -= static_cast<float>(h);
    // evaluate in double via the templated path for a clean reference
    double fp = softmax_cross_entropy(plus.cast<double>(), labels,
                                      static_cast<TensorT<double>*>(nullptr));
    double fm = softmax_cross_entropy(minus.cast<double>(), labels,
                                      static_cast<TensorT<double>*>(nullptr));
    const double numeric = (fp - fm) / (2.0 * h);
    CHECK(grad.v[i] == doctest::Approx(numeric).epsilon(1e-4));
  }
}

TEST_CASE("labels outside the class range are rejected") {
  Tensor logits({1, 3, 1, 1});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}, static_cast<Tensor*>(nullptr)), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}, static_cast<Tensor*>(nullptr)), Error);
}
