#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mazelab/errors.hpp"
#include "mazelab/ppo.hpp"
#include "support/oracles.hpp"

using namespace mazelab;

namespace {

NetworkSpec tiny() {
  NetworkSpec s;
  s.height = 4;
  s.width = 4;
  s.conv = {{3, 3, 1}};
  s.hidden = 8;
  return s;
}

RolloutBatch random_batch(const NetworkSpec& spec, int n, std::uint64_t seed) {
  CounterRng rng(seed);
  RolloutBatch b;
  b.input_size = spec.input_size();
  b.observations.resize(static_cast<std::size_t>(n) * b.input_size);
  for (auto& v : b.observations) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  for (int i = 0; i < n; ++i) {
    b.actions.push_back(static_cast<std::uint8_t>(rng.uniform_int(4)));
    b.old_log_probs.push_back(std::log(0.25) + 0.3 * rng.normal());
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

std::vector<std::size_t> all(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("sampling follows the softmax") {
  const std::array<double, 4> uniform{0, 0, 0, 0};
  CounterRng rng(42);
  std::array<int, 4> counts{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_action(std::span<const double, 4>(uniform), rng);
    ++counts[static_cast<int>(s.action)];
    CHECK(s.log_prob == doctest::Approx(std::log(0.25)));
  }
  for (int c : counts) CHECK(std::abs(c / double(n) - 0.25) < 0.02);

  const std::array<double, 4> skew{std::log(0.1), std::log(0.2), std::log(0.3), std::log(0.4)};
  counts = {};
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(sample_action(std::span<const double, 4>(skew), rng).action)];
  for (int a = 0; a < 4; ++a) CHECK(std::abs(counts[a] / double(n) - 0.1 * (a + 1)) < 0.02);
}

TEST_CASE("greedy picks the argmax, lowest index on ties") {
  const std::array<double, 4> tie{1, 3, 3, 2};
  CHECK(greedy_action(std::span<const double, 4>(tie)) == Action::Down);
  const std::array<float, 4> flat{0, 0, 0, 0};
  CHECK(greedy_action(std::span<const float, 4>(flat)) == Action::Up);
  const std::array<float, 4> last{-1, -2, -3, 5};
  CHECK(greedy_action(std::span<const float, 4>(last)) == Action::Right);
}

TEST_CASE("non-finite logits are rejected") {
  CounterRng rng(0);
  const std::array<double, 4> bad{0, std::numeric_limits<double>::quiet_NaN(), 0, 0};
  CHECK_THROWS_AS(sample_action(std::span<const double, 4>(bad), rng), NumericError);
  const std::array<float, 4> inf{0, 0, std::numeric_limits<float>::infinity(), 0};
  CHECK_THROWS_AS(sample_action(std::span<const float, 4>(inf), rng), NumericError);
}

TEST_CASE("log-softmax and entropy") {
  CounterRng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::array<double, 4> z{};
    for (auto& v : z) v = 20.0 * rng.normal();
    const auto lp = log_softmax<double>(std::span<const double, 4>(z));
    double s = 0.0;
    for (double v : lp) s += std::exp(v);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    const double h = entropy(std::span<const double, 4>(z));
    CHECK(h >= -1e-12);
    CHECK(h <= std::log(4.0) + 1e-12);
  }
  const std::array<double, 4> flat{2, 2, 2, 2};
  CHECK(entropy(std::span<const double, 4>(flat)) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("GAE worked examples against the double sum") {
  auto check = [](Trajectory tr, double gamma, double lam) {
    const auto got = compute_gae(tr, gamma, lam);
    const auto want = oracle::gae_double_sum(tr.rewards, tr.values, tr.dones, tr.bootstrap_value, gamma, lam);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      CHECK(std::abs(got.advantages[i] - want[i]) < 1e-10);
      CHECK(std::abs(got.returns[i] - (want[i] + tr.values[i])) < 1e-10);
    }
  };
  check({{0, 0, 10}, {0, 0, 0}, {0, 0, 1}, 0.0}, 0.99, 0.95);
  check({{1, 2, 3}, {0.5, 0.5, 0.5}, {0, 0, 0}, 0.5}, 0.99, 0.95);
  check({{0, 10, 0, 0}, {1, 2, 3, 4}, {0, 1, 0, 0}, 7.0}, 0.999, 0.95);

  // Terminal reward of 10 two steps ahead with zero values: A_0 = (0.99*0.95)^2 * 10.
  const auto r = compute_gae({{0, 0, 10}, {0, 0, 0}, {0, 0, 1}, 0.0}, 0.99, 0.95);
  CHECK(r.advantages[0] == doctest::Approx(std::pow(0.99 * 0.95, 2) * 10));
  CHECK(r.advantages[2] == doctest::Approx(10.0));
}

TEST_CASE("GAE reductions") {
  CounterRng rng(8);
  for (int t = 0; t < 100; ++t) {
    Trajectory tr;
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < n; ++i) {
      tr.rewards.push_back(double(rng.uniform_int(5)));
      tr.values.push_back(double(rng.uniform_int(7)) - 3.0);
      tr.dones.push_back(rng.uniform_int(6) == 0);
    }
    tr.bootstrap_value = double(rng.uniform_int(9));
    // lambda = 0: one-step TD error.
    const auto td = compute_gae(tr, 0.9, 0.0);
    for (int i = 0; i < n; ++i) {
      const double next = i + 1 < n ? tr.values[i + 1] : tr.bootstrap_value;
      CHECK(td.advantages[i] == tr.rewards[i] + 0.9 * next * (tr.dones[i] ? 0 : 1) - tr.values[i]);
    }
    // gamma = lambda = 1: returns are undiscounted reward-to-go plus bootstrap.
    const auto mc = compute_gae(tr, 1.0, 1.0);
    for (int i = 0; i < n; ++i) {
      double g = 0.0;
      int k = i;
      for (; k < n; ++k) {
        g += tr.rewards[k];
        if (tr.dones[k]) break;
      }
      if (k == n) g += tr.bootstrap_value;
      CHECK(mc.returns[i] == g);
    }
  }
}

TEST_CASE("advantage normalisation") {
  std::vector<double> v{1, 2, 3, 4, 5};
  normalize_advantages(v);
  double mean = 0, sq = 0;
  for (double x : v) mean += x;
  for (double x : v) sq += x * x;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(sq / 5 == doctest::Approx(1.0));
  std::vector<double> one{3.5};
  normalize_advantages(one);
  CHECK(one[0] == 0.0);
  std::vector<double> same{2, 2, 2};
  normalize_advantages(same);
  for (double x : same) CHECK(x == 0.0);
  std::vector<double> none;
  normalize_advantages(none);
}

TEST_CASE("PPO loss gradient matches finite differences") {
  const NetworkSpec spec = tiny();
  auto params = init_params<double>(spec, 5);
  CounterRng rng(2);
  for (Eigen::Index k = 0; k < params.values.size(); ++k) params.values[k] += 0.05 * rng.normal();
  const auto batch = random_batch(spec, 12, 9);
  const auto idx = all(batch.size());
  PPOConfig cfg;
  cfg.clip = 0.2;
  ForwardCache<double> cache;
  Vector<double> grad;
  ppo_loss<double>(params, batch, idx, cfg, cache, &grad);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < params.values.size(); ++k) {
    auto up = params, down = params;
    up.values[k] += 1e-6;
    down.values[k] -= 1e-6;
    const double fd = (ppo_loss<double>(up, batch, idx, cfg, cache, nullptr).total -
                       ppo_loss<double>(down, batch, idx, cfg, cache, nullptr).total) /
                      2e-6;
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("unbounded clip gives the vanilla policy gradient") {
  const NetworkSpec spec = tiny();
  const auto params = init_params<double>(spec, 6);
  auto batch = random_batch(spec, 8, 4);
  const auto idx = all(batch.size());
  PPOConfig cfg;
  cfg.clip = std::numeric_limits<double>::infinity();
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  ForwardCache<double> cache;
  // With old log-probs equal to the current ones, ratio = 1 and the loss
  // gradient is -mean(A * grad log pi(a)).
  forward(params, std::span<const std::uint8_t>(batch.observations), 8, cache);
  for (int i = 0; i < 8; ++i) {
    std::array<double, 4> z{cache.logits(i, 0), cache.logits(i, 1), cache.logits(i, 2), cache.logits(i, 3)};
    batch.old_log_probs[i] = log_softmax<double>(std::span<const double, 4>(z))[batch.actions[i]];
  }
  Vector<double> grad;
  const auto terms = ppo_loss<double>(params, batch, idx, cfg, cache, &grad);
  CHECK(terms.clip_fraction == 0.0);
  CHECK(terms.approx_kl == doctest::Approx(0.0).scale(1.0));

  RowMatrix<double> dlogits = RowMatrix<double>::Zero(8, 4);
  for (int i = 0; i < 8; ++i) {
    std::array<double, 4> z{cache.logits(i, 0), cache.logits(i, 1), cache.logits(i, 2), cache.logits(i, 3)};
    const auto lp = log_softmax<double>(std::span<const double, 4>(z));
    for (int j = 0; j < 4; ++j)
      dlogits(i, j) = -batch.advantages[i] / 8.0 * ((j == batch.actions[i]) - std::exp(lp[j]));
  }
  Vector<double> want;
  backward(params, cache, dlogits, Vector<double>(Vector<double>::Zero(8)), want);
  CHECK((grad - want).norm() <= 1e-12 * std::max(1.0, want.norm()));
}

TEST_CASE("clipping stops the gradient outside the trust region") {
  const NetworkSpec spec = tiny();
  const auto params = init_params<double>(spec, 7);
  auto batch = random_batch(spec, 4, 3);
  for (auto& a : batch.advantages) a = 1.0;
  for (auto& lp : batch.old_log_probs) lp = std::log(0.25) - 1.0;  // ratio ~ e > 1.2
  PPOConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  ForwardCache<double> cache;
  Vector<double> grad;
  const auto terms = ppo_loss<double>(params, batch, all(4), cfg, cache, &grad);
  CHECK(terms.clip_fraction == 1.0);
  CHECK(grad.norm() == 0.0);
  CHECK(terms.policy_loss == doctest::Approx(-1.2));
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
  const NetworkSpec spec = tiny();
  auto params = init_params<float>(spec, 1);
  const auto before = params.values;
  Adam adam(params.count());
  auto batch = random_batch(spec, 32, 2);
  normalize_advantages(batch.advantages);
  PPOConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.minibatches = 4;
  CounterRng shuffle(0);
  const auto stats = ppo_update(params, adam, batch, cfg, shuffle);
  CHECK(params.values == before);
  CHECK(stats.minibatch_steps == cfg.epochs * cfg.minibatches);
}

TEST_CASE("an update reduces the surrogate loss on its own batch") {
  const NetworkSpec spec = tiny();
  auto params = init_params<float>(spec, 3);
  Adam adam(params.count());
  auto batch = random_batch(spec, 64, 5);
  normalize_advantages(batch.advantages);
  PPOConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 10;
  cfg.minibatches = 1;
  const auto idx = all(batch.size());
  ForwardCache<float> cache;
  const double before = ppo_loss<float>(params, batch, idx, cfg, cache, nullptr).total;
  CounterRng shuffle(1);
  ppo_update(params, adam, batch, cfg, shuffle);
  const double after = ppo_loss<float>(params, batch, idx, cfg, cache, nullptr).total;
  CHECK(after < before);
}

TEST_CASE("Adam first step moves each coordinate by about lr") {
  Vector<float> p = Vector<float>::Zero(3);
  Vector<float> g(3);
  g << 0.5f, -2.0f, 1e-3f;
  Adam adam(3);
  adam.step(p, g, 0.01);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(-0.01).epsilon(1e-3));
  CHECK(adam.steps() == 1);
}

TEST_CASE("config validation") {
  PPOConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.minibatches = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.num_envs = 3;
  c.steps_per_env = 5;
  c.minibatches = 16;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
}
