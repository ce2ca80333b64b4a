#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mazelab/env.hpp"
#include "mazelab/network.hpp"
#include "mazelab/rng.hpp"

namespace mazelab {

struct PPOConfig {
  double gamma = 0.999;
  double lam = 0.95;
  double clip = 0.2;
  double learning_rate = 5e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  int epochs = 3;
  int minibatches = 8;
  int num_envs = 8;
  int steps_per_env = 256;
  std::int64_t total_steps = 1'000'000;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PPOConfig&, const PPOConfig&) = default;
};

// One environment's rollout segment. Arrays share length T; done[t] marks that
// the step taken at t ended the episode.
struct Trajectory {
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  double bootstrap_value = 0.0;

  std::size_t size() const { return rewards.size(); }
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

Advantages compute_gae(const Trajectory& traj, double gamma, double lam);

// In place, over the whole vector. Leaves a single element unchanged apart from centring.
void normalize_advantages(std::span<double> adv);

template <typename Scalar>
std::array<Scalar, 4> log_softmax(std::span<const Scalar, 4> logits) {
  Scalar m = logits[0];
  for (Scalar z : logits) m = std::max(m, z);
  Scalar s = 0;
  for (Scalar z : logits) s += std::exp(z - m);
  const Scalar lse = m + std::log(s);
  return {logits[0] - lse, logits[1] - lse, logits[2] - lse, logits[3] - lse};
}

struct ActionSample {
  Action action = Action::Up;
  double log_prob = 0.0;
};

// Throws NumericError on non-finite logits.
ActionSample sample_action(std::span<const float, 4> logits, CounterRng& rng);
ActionSample sample_action(std::span<const double, 4> logits, CounterRng& rng);
// Argmax, lowest index wins ties.
Action greedy_action(std::span<const float, 4> logits);
Action greedy_action(std::span<const double, 4> logits);

double entropy(std::span<const double, 4> logits);

// Flattened rollout ready for optimization.
struct RolloutBatch {
  int input_size = 0;
  std::vector<std::uint8_t> observations;  // size() x input_size
  std::vector<std::uint8_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct LossTerms {
  double total = 0;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
};

// Minimized objective:
//   -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) + c_v*mean((V-R)^2) - c_e*mean(H)
// with r = exp(logp_new - logp_old). Fills grad with d(total)/d(params).
template <typename Scalar>
LossTerms ppo_loss(const Parameters<Scalar>& params, const RolloutBatch& batch, std::span<const std::size_t> indices,
                   const PPOConfig& config, ForwardCache<Scalar>& cache, Vector<Scalar>* grad) {
  const int n = static_cast<int>(indices.size());
  std::vector<std::uint8_t> obs(static_cast<std::size_t>(n) * batch.input_size);
  for (int i = 0; i < n; ++i)
    std::copy_n(batch.observations.begin() + static_cast<std::ptrdiff_t>(indices[i] * batch.input_size),
                batch.input_size, obs.begin() + static_cast<std::ptrdiff_t>(i) * batch.input_size);
  forward(params, std::span<const std::uint8_t>(obs), n, cache);

  RowMatrix<Scalar> dlogits = RowMatrix<Scalar>::Zero(n, 4);
  Vector<Scalar> dvalues = Vector<Scalar>::Zero(n);
  LossTerms t;
  const Scalar inv_n = Scalar(1) / Scalar(n);
  const Scalar eps = Scalar(config.clip);
  for (int i = 0; i < n; ++i) {
    const std::size_t k = indices[i];
    std::array<Scalar, 4> z{cache.logits(i, 0), cache.logits(i, 1), cache.logits(i, 2), cache.logits(i, 3)};
    const auto logp = log_softmax<Scalar>(std::span<const Scalar, 4>(z));
    std::array<Scalar, 4> pi{};
    for (int j = 0; j < 4; ++j) pi[j] = std::exp(logp[j]);

    const int a = batch.actions[k];
    const Scalar adv = Scalar(batch.advantages[k]);
    const Scalar log_ratio = logp[a] - Scalar(batch.old_log_probs[k]);
    const Scalar ratio = std::exp(log_ratio);
    const Scalar clipped = std::clamp(ratio, Scalar(1) - eps, Scalar(1) + eps);
    const Scalar unclipped_obj = ratio * adv;
    const Scalar clipped_obj = clipped * adv;
    const bool use_unclipped = unclipped_obj <= clipped_obj;
    const Scalar surrogate = use_unclipped ? unclipped_obj : clipped_obj;

    Scalar h = 0;
    for (int j = 0; j < 4; ++j) h -= pi[j] * logp[j];
    const Scalar verr = cache.values[i] - Scalar(batch.returns[k]);

    t.policy_loss += static_cast<double>(-surrogate * inv_n);
    t.value_loss += static_cast<double>(verr * verr * inv_n);
    t.entropy += static_cast<double>(h * inv_n);
    t.clip_fraction += (std::abs(static_cast<double>(ratio) - 1.0) > config.clip) ? 1.0 / n : 0.0;
    t.approx_kl += static_cast<double>(((ratio - 1) - log_ratio) * inv_n);

    if (grad == nullptr) continue;
    // d(-surrogate)/d(logp_a) is -r*A on the unclipped branch, 0 otherwise.
    const Scalar dlogp_a = use_unclipped ? -ratio * adv * inv_n : Scalar(0);
    const Scalar ent_scale = Scalar(config.entropy_coef) * inv_n;
    for (int j = 0; j < 4; ++j) {
      Scalar d = dlogp_a * ((j == a ? Scalar(1) : Scalar(0)) - pi[j]);
      // dH/dz_j = -pi_j (logp_j + H); the loss carries -c_e*H.
      d += ent_scale * pi[j] * (logp[j] + h);
      dlogits(i, j) = d;
    }
    dvalues[i] = Scalar(2.0 * config.value_coef) * verr * inv_n;
  }
  t.total = t.policy_loss + config.value_coef * t.value_loss - config.entropy_coef * t.entropy;
  if (!std::isfinite(t.total))
    throw NumericError("non-finite PPO loss (policy " + std::to_string(t.policy_loss) + ", value " +
                       std::to_string(t.value_loss) + ", entropy " + std::to_string(t.entropy) + ")");
  if (grad != nullptr) {
    *grad = Vector<Scalar>::Zero(params.values.size());
    backward(params, cache, dlogits, dvalues, *grad);
  }
  return t;
}

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector<float>::Zero(static_cast<Eigen::Index>(n))),
        v_(Vector<float>::Zero(static_cast<Eigen::Index>(n))) {}

  void step(Vector<float>& params, const Vector<float>& grad, double lr);
  std::int64_t steps() const { return t_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  Vector<float> m_;
  Vector<float> v_;
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
  double grad_norm = 0;
  int minibatch_steps = 0;
};

// `epochs` passes over `minibatches` shuffled partitions of the batch.
// Advantages must already be normalized.
UpdateStats ppo_update(Parameters<float>& params, Adam& optimizer, const RolloutBatch& batch, const PPOConfig& config,
                       CounterRng& shuffle_rng);

}  // namespace mazelab
