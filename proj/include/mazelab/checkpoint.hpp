#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mazelab/env.hpp"
#include "mazelab/network.hpp"
#include "mazelab/ppo.hpp"

namespace mazelab {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kRendererId = "simplified/v1";
inline constexpr std::string_view kOptimizerId = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";

struct Checkpoint {
  Parameters<float> params;  // carries the NetworkSpec
  PPOConfig ppo;
  LevelConfig env_config;
  std::uint64_t training_seed = 0;
  std::string env_config_hash;
  std::string rng_algorithm;
  std::string optimizer;
  std::int64_t total_steps = 0;
  std::uint32_t format_version = kCheckpointVersion;

  const NetworkSpec& spec() const { return params.spec; }
};

// Hash of everything that fixes the observation geometry: renderer, grid size
// and network input shape. Object colours and backgrounds are deliberately
// excluded so one checkpoint can be evaluated on any scenario of that geometry.
std::string env_geometry_hash(int grid_size, const NetworkSpec& spec);

// Container: "MZLBCKPT" | u32 version | u32 header length | JSON header |
// u64 parameter count | float32 LE parameters | u64 FNV-1a of all prior bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                  const std::optional<std::string>& expected_env_hash = std::nullopt);

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
// Throws CheckpointError: VersionMismatch, HashMismatch, Corrupt or Io.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_env_hash = std::nullopt);

// SHA-256 of the serialized form.
std::string checkpoint_hash(const Checkpoint& cp);

}  // namespace mazelab
