#include "mazelab/ppo.hpp"

#include <algorithm>
#include <numeric>

namespace mazelab {

void PPOConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidConfig("gamma must be in (0, 1]");
  if (!(lam >= 0.0 && lam <= 1.0)) throw InvalidConfig("lambda must be in [0, 1]");
  if (!(clip > 0.0)) throw InvalidConfig("clip must be > 0");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("learning rate must be >= 0");
  if (epochs < 1 || minibatches < 1) throw InvalidConfig("epochs and minibatches must be >= 1");
  if (num_envs < 1 || steps_per_env < 1) throw InvalidConfig("num_envs and steps_per_env must be >= 1");
  if (minibatches > num_envs * steps_per_env) throw InvalidConfig("more minibatches than samples per update");
  if (total_steps < 0) throw InvalidConfig("total_steps must be >= 0");
}

Advantages compute_gae(const Trajectory& traj, double gamma, double lam) {
  const std::size_t n = traj.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? traj.values[t + 1] : traj.bootstrap_value;
    const double nonterminal = traj.dones[t] ? 0.0 : 1.0;
    const double delta = traj.rewards[t] + gamma * next_value * nonterminal - traj.values[t];
    running = delta + gamma * lam * nonterminal * running;
    out.advantages[t] = running;
    out.returns[t] = running + traj.values[t];
  }
  return out;
}

void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  if (adv.size() < 2) {
    for (double& a : adv) a -= mean;
    return;
  }
  const double std_dev = std::sqrt(var / static_cast<double>(adv.size()));
  for (double& a : adv) a = (a - mean) / (std_dev + 1e-12);
}

namespace {

template <typename Scalar>
void check_finite(std::span<const Scalar, 4> logits) {
  for (Scalar z : logits)
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
}

template <typename Scalar>
ActionSample sample_impl(std::span<const Scalar, 4> logits, CounterRng& rng) {
  check_finite(logits);
  std::array<double, 4> z{double(logits[0]), double(logits[1]), double(logits[2]), double(logits[3])};
  const auto logp = log_softmax<double>(std::span<const double, 4>(z));
  const double u = rng.uniform01();
  double acc = 0.0;
  int chosen = 3;
  for (int j = 0; j < 4; ++j) {
    acc += std::exp(logp[j]);
    if (u < acc) {
      chosen = j;
      break;
    }
  }
  return {static_cast<Action>(chosen), logp[chosen]};
}

template <typename Scalar>
Action greedy_impl(std::span<const Scalar, 4> logits) {
  check_finite(logits);
  int best = 0;
  for (int j = 1; j < 4; ++j)
    if (logits[j] > logits[best]) best = j;
  return static_cast<Action>(best);
}

}  // namespace

ActionSample sample_action(std::span<const float, 4> logits, CounterRng& rng) { return sample_impl(logits, rng); }
ActionSample sample_action(std::span<const double, 4> logits, CounterRng& rng) { return sample_impl(logits, rng); }
Action greedy_action(std::span<const float, 4> logits) { return greedy_impl(logits); }
Action greedy_action(std::span<const double, 4> logits) { return greedy_impl(logits); }

double entropy(std::span<const double, 4> logits) {
  const auto logp = log_softmax<double>(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  return h;
}

void Adam::step(Vector<float>& params, const Vector<float>& grad, double lr) {
  ++t_;
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  m_ = b1 * m_ + (1.0f - b1) * grad;
  v_ = b2 * v_ + (1.0f - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr / c1);
  const auto sqrt_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(eps_);
  params.array() -= step_size * m_.array() / (v_.array().sqrt() / sqrt_c2 + eps);
}

UpdateStats ppo_update(Parameters<float>& params, Adam& optimizer, const RolloutBatch& batch, const PPOConfig& config,
                       CounterRng& shuffle_rng) {
  UpdateStats stats;
  const std::size_t n = batch.size();
  if (n == 0) return stats;
  std::vector<std::size_t> order(n);
  ForwardCache<float> cache;
  Vector<float> grad;
  const std::size_t mb = std::max<std::size_t>(1, n / static_cast<std::size_t>(config.minibatches));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    for (int m = 0; m < config.minibatches; ++m) {
      const std::size_t begin = static_cast<std::size_t>(m) * mb;
      const std::size_t end = m + 1 == config.minibatches ? n : std::min(n, begin + mb);
      if (begin >= end) continue;
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const LossTerms t = ppo_loss(params, batch, idx, config, cache, &grad);

      double norm = static_cast<double>(grad.norm());
      if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
      stats.grad_norm += norm;
      if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm)
        grad *= static_cast<float>(config.max_grad_norm / norm);
      optimizer.step(params.values, grad, config.learning_rate);

      stats.policy_loss += t.policy_loss;
      stats.value_loss += t.value_loss;
      stats.entropy += t.entropy;
      stats.clip_fraction += t.clip_fraction;
      stats.approx_kl += t.approx_kl;
      ++stats.minibatch_steps;
    }
  }
  if (stats.minibatch_steps > 0) {
    const double k = stats.minibatch_steps;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
  }
  return stats;
}

}  // namespace mazelab
