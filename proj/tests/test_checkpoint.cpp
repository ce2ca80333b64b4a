#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mazelab/checkpoint.hpp"
#include "mazelab/errors.hpp"
#include "mazelab/serialization.hpp"

using namespace mazelab;
namespace fs = std::filesystem;

namespace {

Checkpoint sample(std::uint64_t seed = 3) {
  NetworkSpec spec;
  spec.conv = {{4, 3, 2}, {4, 3, 2}};
  spec.hidden = 16;
  Checkpoint cp;
  cp.params = init_params<float>(spec, seed);
  // Put awkward floats in so the round-trip has something to get wrong.
  cp.params.values[0] = -0.0f;
  cp.params.values[1] = 1e-42f;
  cp.params.values[2] = 3.4e38f;
  cp.ppo.seed = seed;
  cp.ppo.total_steps = 12345;
  cp.env_config.objects = {{Shape::Line, Colour::Yellow, Role::Target}};
  cp.training_seed = seed;
  cp.env_config_hash = env_geometry_hash(cp.env_config.grid_size, spec);
  cp.rng_algorithm = "splitmix64-counter/v1";
  cp.optimizer = std::string(kOptimizerId);
  cp.total_steps = 12288;
  return cp;
}

CheckpointError::Kind error_kind(std::span<const std::uint8_t> bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("expected a CheckpointError");
  return CheckpointError::Kind::Io;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit exact") {
  const Checkpoint cp = sample();
  const auto bytes = serialize_checkpoint(cp);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(std::memcmp(back.params.values.data(), cp.params.values.data(), cp.params.count() * sizeof(float)) == 0);
  CHECK(back.spec() == cp.spec());
  CHECK(back.params.layout == cp.params.layout);
  CHECK(back.ppo == cp.ppo);
  CHECK(back.env_config == cp.env_config);
  CHECK(back.training_seed == cp.training_seed);
  CHECK(back.env_config_hash == cp.env_config_hash);
  CHECK(back.rng_algorithm == cp.rng_algorithm);
  CHECK(back.optimizer == cp.optimizer);
  CHECK(back.total_steps == cp.total_steps);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(checkpoint_hash(back) == checkpoint_hash(cp));
  CHECK(checkpoint_hash(sample(4)) != checkpoint_hash(cp));
}

TEST_CASE("checkpoint files") {
  const fs::path dir = fs::temp_directory_path() / "mazelab_test_checkpoint";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Checkpoint cp = sample();
  save_checkpoint(cp, dir / "a.mzl");
  CHECK(sha256_file(dir / "a.mzl") == checkpoint_hash(cp));
  const Checkpoint back = load_checkpoint(dir / "a.mzl", cp.env_config_hash);
  CHECK(back.params.values == cp.params.values);

  try {
    load_checkpoint(dir / "missing.mzl");
    FAIL("expected an error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Io);
  }
  fs::remove_all(dir);
}

TEST_CASE("truncation and corruption are detected") {
  const auto bytes = serialize_checkpoint(sample());
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 9, bytes.size() - 1})
    CHECK(error_kind(std::span(bytes).first(cut)) == CheckpointError::Kind::Corrupt);

  auto flipped = bytes;
  flipped[bytes.size() - 20] ^= 0x40;
  CHECK(error_kind(flipped) == CheckpointError::Kind::Corrupt);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(error_kind(magic) == CheckpointError::Kind::Corrupt);

  auto longer = bytes;
  longer.push_back(0);
  CHECK(error_kind(longer) == CheckpointError::Kind::Corrupt);
}

TEST_CASE("version mismatch") {
  auto bytes = serialize_checkpoint(sample());
  bytes[8] = 2;  // u32 version follows the 8-byte magic
  CHECK(error_kind(bytes) == CheckpointError::Kind::VersionMismatch);
  Checkpoint cp = sample();
  cp.format_version = 7;
  CHECK(error_kind(serialize_checkpoint(cp)) == CheckpointError::Kind::VersionMismatch);
}

TEST_CASE("env hash mismatch") {
  const Checkpoint cp = sample();
  const auto bytes = serialize_checkpoint(cp);
  try {
    deserialize_checkpoint(bytes, env_geometry_hash(9, cp.spec()));
    FAIL("expected an error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::HashMismatch);
  }
  Checkpoint forged = cp;
  forged.env_config_hash = "0000000000000000";
  CHECK(error_kind(serialize_checkpoint(forged)) == CheckpointError::Kind::HashMismatch);
}

TEST_CASE("geometry hash ignores colours but not grid or input shape") {
  const NetworkSpec spec;
  CHECK(env_geometry_hash(5, spec) == env_geometry_hash(5, NetworkSpec{}));
  CHECK(env_geometry_hash(5, spec) != env_geometry_hash(7, spec));
  NetworkSpec other;
  other.height = 32;
  CHECK(env_geometry_hash(5, spec) != env_geometry_hash(5, other));
  CHECK(env_geometry_hash(5, spec).size() == 16);
}

TEST_CASE("layout JSON round-trip") {
  const auto layout = parameter_layout(NetworkSpec{});
  CHECK(layout_from_json(to_json(layout)) == layout);
  CHECK(network_spec_from_json(to_json(NetworkSpec{})) == NetworkSpec{});
  PPOConfig p;
  p.gamma = 0.97;
  p.seed = 99;
  CHECK(ppo_config_from_json(to_json(p)) == p);
}
