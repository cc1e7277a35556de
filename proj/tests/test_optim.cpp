#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "scenewise/adamw.hpp"
#include "scenewise/common.hpp"
#include "scenewise/mixstyle.hpp"
#include "scenewise/rng.hpp"

using namespace scenewise;

namespace {

// one-parameter store for scalar optimizer fixtures
ParamStore scalar_store(float theta) {
  ParamStore s;
  s.layers.resize(1);
  Tensor t({1});
  t.v[0] = theta;
  s.layers[0].emplace("weight", std::move(t));
  return s;
}

ParamStore scalar_grad(float g) { return scalar_store(g); }

Tensor random_batch(int b, int c, int f, int t, uint64_t seed, double lo = -1.0, double hi = 3.0) {
  Rng rng(seed);
  Tensor x({b, c, f, t});
  for (float& v : x.v) v = static_cast<float>(rng.uniform(lo, hi));
  return x;
}

void bin_stats(const Tensor& x, int n, int f, double* mean, double* sd) {
  const int c = x.shape[1], t = x.shape[3];
  const size_t plane = static_cast<size_t>(x.shape[2]) * t;
  double sum = 0.0, sum_sq = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    const float* row = x.data() + (static_cast<size_t>(n) * c + ch) * plane +
                       static_cast<size_t>(f) * t;
    for (int ti = 0; ti < t; ++ti) {
      sum += row[ti];
      sum_sq += static_cast<double>(row[ti]) * row[ti];
    }
  }
  const double count = static_cast<double>(c) * t;
  *mean = sum / count;
  const double var = std::max(0.0, sum_sq / count - (*mean) * (*mean));
  *sd = std::sqrt(var + 1e-6);
}

}  // namespace

TEST_CASE("first AdamW step matches the closed form") {
  ParamStore params = scalar_store(1.0f);
  ParamStore grads = scalar_grad(0.5f);
  AdamWState state = make_adamw_state(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  const double lr = 0.01;
  adamw_step(state, params, grads, lr, cfg);

  // bias-corrected first step: m_hat = g, v_hat = g^2
  const double expect = 1.0 - lr * 0.5 / (std::sqrt(0.25) + cfg.eps);
  CHECK(params.layers[0].at("weight").v[0] == doctest::Approx(expect).epsilon(1e-7));
  CHECK(state.step == 1);
}

TEST_CASE("lr=0 leaves parameters untouched but advances the moments") {
  ParamStore params = scalar_store(2.5f);
  ParamStore grads = scalar_grad(1.0f);
  AdamWState state = make_adamw_state(params);
  adamw_step(state, params, grads, 0.0, AdamWConfig{});
  CHECK(params.layers[0].at("weight").v[0] == 2.5f);
  CHECK(state.m.layers[0].at("weight").v[0] != 0.0f);
  CHECK(state.v.layers[0].at("weight").v[0] != 0.0f);
}

TEST_CASE("ten AdamW steps on theta^2 shrink theta monotonically") {
  ParamStore params = scalar_store(1.0f);
  AdamWState state = make_adamw_state(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;

  // independent scalar simulation of the same update rule
  double sim_theta = 1.0, sim_m = 0.0, sim_v = 0.0;
  double prev = 1.0;
  for (int step = 1; step <= 10; ++step) {
    const float theta = params.layers[0].at("weight").v[0];
    ParamStore grads = scalar_grad(2.0f * theta);
    adamw_step(state, params, grads, 0.1, cfg);

    const double g = 2.0 * sim_theta;
    sim_m = cfg.beta1 * sim_m + (1 - cfg.beta1) * g;
    sim_v = cfg.beta2 * sim_v + (1 - cfg.beta2) * g * g;
    const double m_hat = sim_m / (1 - std::pow(cfg.beta1, step));
    const double v_hat = sim_v / (1 - std::pow(cfg.beta2, step));
    sim_theta -= 0.1 * m_hat / (std::sqrt(v_hat) + cfg.eps);

    const double cur = params.layers[0].at("weight").v[0];
    CHECK(std::abs(cur) < std::abs(prev));
    CHECK(cur == doctest::Approx(sim_theta).epsilon(1e-5));
    prev = cur;
  }
}

TEST_CASE("decoupled weight decay shrinks parameters independently of the gradient") {
  ParamStore params = scalar_store(4.0f);
  ParamStore grads = scalar_grad(0.0f);
  AdamWState state = make_adamw_state(params);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  adamw_step(state, params, grads, 0.5, cfg);
  // zero gradient: only the decay term applies
  CHECK(params.layers[0].at("weight").v[0] == doctest::Approx(4.0 * (1.0 - 0.5 * 0.1)));
}

TEST_CASE("non-finite gradients abort with the tensor name") {
  ParamStore params = scalar_store(1.0f);
  ParamStore grads = scalar_grad(std::numeric_limits<float>::infinity());
  AdamWState state = make_adamw_state(params);
  CHECK_THROWS_WITH_AS(adamw_step(state, params, grads, 0.1, AdamWConfig{}),
                       doctest::Contains("layer0.weight"), Error);
}

TEST_CASE("warmup-cosine schedule has the documented shape") {
  LrSchedule sched{0.01, 100, 0.1, 0.01};
  CHECK(sched.at(0) == doctest::Approx(0.001));   // 1/10 of the way up
  CHECK(sched.at(9) == doctest::Approx(0.01));    // warmup ends at peak
  CHECK(sched.at(10) == doctest::Approx(0.01).epsilon(1e-2));
  CHECK(sched.at(99) == doctest::Approx(0.0001)); // 1% of peak at the end
  for (int64_t s = 10; s < 99; ++s) CHECK(sched.at(s) >= sched.at(s + 1));
}

TEST_CASE("freq-mixstyle with lambda 1 is the identity") {
  Tensor batch = random_batch(4, 1, 6, 9, 71);
  std::vector<size_t> partner = {3, 2, 1, 0};
  Tensor out = apply_freq_mixstyle(batch, 1.0, partner);
  REQUIRE(out.shape == batch.shape);
  for (size_t i = 0; i < batch.v.size(); ++i) {
    CHECK(out.v[i] == doctest::Approx(batch.v[i]).epsilon(1e-6));
  }
}

TEST_CASE("freq-mixstyle with lambda 0 adopts the partner's per-bin statistics") {
  Tensor batch = random_batch(3, 2, 5, 16, 72, -2.0, 2.0);
  std::vector<size_t> partner = {1, 2, 0};
  Tensor out = apply_freq_mixstyle(batch, 0.0, partner);
  for (int n = 0; n < 3; ++n) {
    for (int f = 0; f < 5; ++f) {
      double mean_out, sd_out, mean_partner, sd_partner;
      bin_stats(out, n, f, &mean_out, &sd_out);
      bin_stats(batch, static_cast<int>(partner[static_cast<size_t>(n)]), f, &mean_partner,
                &sd_partner);
      CHECK(mean_out == doctest::Approx(mean_partner).epsilon(1e-5));
      CHECK(sd_out == doctest::Approx(sd_partner).epsilon(1e-5));
    }
  }
}

TEST_CASE("probability zero returns the batch bit-identically") {
  Tensor batch = random_batch(4, 1, 8, 8, 73);
  FreqMixStyleConfig cfg;
  cfg.probability = 0.0;
  Rng rng(9);
  Tensor out = freq_mixstyle(batch, cfg, rng);
  CHECK(out.v == batch.v);
}

TEST_CASE("probability one always restyles, and the rng stream is reproducible") {
  Tensor batch = random_batch(4, 1, 8, 8, 74);
  FreqMixStyleConfig cfg;
  cfg.probability = 1.0;
  Rng rng_a(10), rng_b(10);
  Tensor out_a = freq_mixstyle(batch, cfg, rng_a);
  Tensor out_b = freq_mixstyle(batch, cfg, rng_b);
  CHECK(out_a.v == out_b.v);
  CHECK(out_a.shape == batch.shape);
}

TEST_CASE("batches smaller than two pass through unchanged") {
  Tensor batch = random_batch(1, 1, 4, 4, 75);
  FreqMixStyleConfig cfg;
  cfg.probability = 1.0;
  Rng rng(11);
  Tensor out = freq_mixstyle(batch, cfg, rng);
  CHECK(out.v == batch.v);
}

TEST_CASE("mixstyle config validation") {
  FreqMixStyleConfig cfg;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FreqMixStyleConfig{};
  cfg.probability = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
