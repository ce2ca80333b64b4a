#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mazelab/checkpoint.hpp"
#include "mazelab/env.hpp"
#include "mazelab/network.hpp"
#include "mazelab/ppo.hpp"

namespace mazelab {

struct CurvePoint {
  std::int64_t step = 0;
  double mean_return = 0.0;  // NaN when no episode finished during the update
  double mean_ep_len = 0.0;
  int episodes = 0;
  UpdateStats stats;
};

struct TrainOptions {
  NetworkSpec network;
  std::function<void(const CurvePoint&)> on_update;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
};

// Collect -> GAE -> PPO update on ppo.num_envs environments. Every episode
// draws a fresh level whose seed lives in the train/<seed> namespace. The
// number of updates is ceil(total_steps / (num_envs * steps_per_env)).
TrainResult train(const LevelConfig& env_template, const PPOConfig& ppo, std::uint64_t seed,
                  const TrainOptions& options = {});

// Seed of the level used by environment `env` for its `episode`-th episode.
std::uint64_t training_level_seed(std::uint64_t training_seed, int env, std::uint64_t episode);

// CSV: step,mean_return,mean_ep_len
void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

}  // namespace mazelab
