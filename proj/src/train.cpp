#include "mazelab/train.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "mazelab/render.hpp"
#include "mazelab/serialization.hpp"

namespace mazelab {

namespace {

struct EnvSlot {
  std::unique_ptr<Level> level;
  std::unique_ptr<FrameRenderer> renderer;
  EpisodeState state;
  std::uint64_t episode = 0;
  double episode_return = 0.0;
  CounterRng action_rng;
};

void start_episode(EnvSlot& slot, const LevelConfig& tmpl, std::uint64_t seed, int env) {
  LevelConfig cfg = tmpl;
  cfg.seed = training_level_seed(seed, env, slot.episode);
  slot.level = std::make_unique<Level>(make_level(cfg));
  slot.renderer = std::make_unique<FrameRenderer>(*slot.level);
  slot.state = reset(*slot.level);
  slot.episode_return = 0.0;
}

}  // namespace

std::uint64_t training_level_seed(std::uint64_t training_seed, int env, std::uint64_t episode) {
  return derive_key(derive_key(namespaced_seed("train", training_seed), static_cast<std::uint64_t>(env)), episode);
}

TrainResult train(const LevelConfig& env_template, const PPOConfig& ppo_in, std::uint64_t seed,
                  const TrainOptions& options) {
  PPOConfig ppo = ppo_in;
  ppo.seed = seed;
  ppo.validate();
  const NetworkSpec& spec = options.network;
  spec.validate();
  if (spec.height != kAgentViewPx || spec.width != kAgentViewPx || spec.channels != 3)
    throw ShapeError("network input must be 64x64x3 to match the agent view");
  if (env_template.objects.empty()) throw InvalidConfig("training config needs a target object");

  TrainResult result;
  Checkpoint& cp = result.checkpoint;
  cp.params = init_params<float>(spec, seed);
  cp.ppo = ppo;
  cp.env_config = env_template;
  cp.env_config.seed = 0;
  cp.training_seed = seed;
  cp.env_config_hash = env_geometry_hash(env_template.grid_size, spec);
  cp.rng_algorithm = std::string(kRngAlgorithmId);
  cp.optimizer = std::string(kOptimizerId);

  const int n_envs = ppo.num_envs;
  const int horizon = ppo.steps_per_env;
  const std::int64_t per_update = static_cast<std::int64_t>(n_envs) * horizon;
  const std::int64_t updates = (ppo.total_steps + per_update - 1) / per_update;
  const int input = spec.input_size();

  std::vector<EnvSlot> envs(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e) {
    envs[e].action_rng = CounterRng(derive_key(namespaced_seed("train/actions", seed), static_cast<std::uint64_t>(e)));
    start_episode(envs[e], env_template, seed, e);
  }
  CounterRng shuffle_rng(namespaced_seed("train/shuffle", seed));
  Adam adam(cp.params.count());
  ForwardCache<float> cache;

  // Rollout storage, time-major: index t * n_envs + e.
  RolloutBatch batch;
  batch.input_size = input;
  std::vector<std::uint8_t> frame(static_cast<std::size_t>(n_envs) * input);
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n_envs));

  std::int64_t env_steps = 0;
  for (std::int64_t u = 0; u < updates; ++u) {
    batch.observations.assign(static_cast<std::size_t>(per_update) * input, 0);
    batch.actions.assign(static_cast<std::size_t>(per_update), 0);
    batch.old_log_probs.assign(static_cast<std::size_t>(per_update), 0.0);
    for (auto& tr : trajs) {
      tr.rewards.assign(horizon, 0.0);
      tr.values.assign(horizon, 0.0);
      tr.dones.assign(horizon, 0);
    }
    double finished_return = 0.0;
    double finished_len = 0.0;
    int finished = 0;

    for (int t = 0; t < horizon; ++t) {
      for (int e = 0; e < n_envs; ++e)
        envs[e].renderer->draw(envs[e].state, std::span(frame).subspan(static_cast<std::size_t>(e) * input, input));
      forward(cp.params, std::span<const std::uint8_t>(frame), n_envs, cache);
      for (int e = 0; e < n_envs; ++e) {
        EnvSlot& slot = envs[e];
        const std::size_t k = static_cast<std::size_t>(t) * n_envs + e;
        std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(e) * input, input,
                    batch.observations.begin() + static_cast<std::ptrdiff_t>(k * input));
        const std::array<float, 4> z{cache.logits(e, 0), cache.logits(e, 1), cache.logits(e, 2), cache.logits(e, 3)};
        ActionSample s;
        try {
          s = sample_action(std::span<const float, 4>(z), slot.action_rng);
        } catch (const NumericError& err) {
          throw NumericError(std::string(err.what()) + " at env step " + std::to_string(env_steps));
        }
        batch.actions[k] = static_cast<std::uint8_t>(s.action);
        batch.old_log_probs[k] = s.log_prob;
        trajs[e].values[t] = cache.values[e];

        const StepOutcome out = step(slot.state, s.action);
        trajs[e].rewards[t] = out.reward;
        slot.episode_return += out.reward;
        if (out.terminated) {
          trajs[e].dones[t] = 1;
          finished_return += slot.episode_return;
          finished_len += out.next_state.steps_taken;
          ++finished;
          ++slot.episode;
          start_episode(slot, env_template, seed, e);
        } else {
          slot.state = out.next_state;
        }
      }
      env_steps += n_envs;
    }

    for (int e = 0; e < n_envs; ++e)
      envs[e].renderer->draw(envs[e].state, std::span(frame).subspan(static_cast<std::size_t>(e) * input, input));
    forward(cp.params, std::span<const std::uint8_t>(frame), n_envs, cache);

    batch.advantages.assign(static_cast<std::size_t>(per_update), 0.0);
    batch.returns.assign(static_cast<std::size_t>(per_update), 0.0);
    for (int e = 0; e < n_envs; ++e) {
      trajs[e].bootstrap_value = cache.values[e];
      const Advantages adv = compute_gae(trajs[e], ppo.gamma, ppo.lam);
      for (int t = 0; t < horizon; ++t) {
        const std::size_t k = static_cast<std::size_t>(t) * n_envs + e;
        batch.advantages[k] = adv.advantages[t];
        batch.returns[k] = adv.returns[t];
      }
    }
    normalize_advantages(batch.advantages);

    CurvePoint point;
    try {
      point.stats = ppo_update(cp.params, adam, batch, ppo, shuffle_rng);
    } catch (const NumericError& err) {
      throw NumericError(std::string(err.what()) + " at env step " + std::to_string(env_steps));
    }
    point.step = env_steps;
    point.episodes = finished;
    point.mean_return = finished ? finished_return / finished : std::numeric_limits<double>::quiet_NaN();
    point.mean_ep_len = finished ? finished_len / finished : std::numeric_limits<double>::quiet_NaN();
    result.curve.push_back(point);
    if (options.on_update) options.on_update(point);
  }
  cp.total_steps = env_steps;
  return result;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,mean_return,mean_ep_len\n";
  os.precision(10);
  for (const auto& p : curve) {
    os << p.step << ',';
    if (std::isfinite(p.mean_return)) os << p.mean_return;
    os << ',';
    if (std::isfinite(p.mean_ep_len)) os << p.mean_ep_len;
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace mazelab
