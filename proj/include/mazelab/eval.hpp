#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mazelab/analysis.hpp"
#include "mazelab/checkpoint.hpp"
#include "mazelab/env.hpp"
#include "json.hpp"

namespace mazelab {

// Two objects, both terminal. object_b may be absent for single-object
// capability tests.
struct TestScenario {
  std::string id;
  ObjectSpec object_a;
  std::optional<ObjectSpec> object_b;
  BackgroundSpec background;
  int max_steps = kDefaultMaxSteps;
  int grid_size = kDefaultGridSize;

  // Throws InvalidConfig when A and B share shape and colour.
  void validate() const;
};

// "<a>_vs_<b>_<background>", or "<a>_<background>" without a second object.
std::string default_scenario_id(const TestScenario& s);

// The level geometry every scenario of this grid size renders to.
std::string scenario_geometry_hash(int grid_size);

struct LevelSet {
  TestScenario scenario;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> level_seeds;

  // The two objects are placed in a canonical order (by object id) so a
  // scenario and its mirror share physical placements on every seed.
  LevelConfig level_config(std::size_t i) const;
  Level level(std::size_t i) const;
  std::size_t a_index() const;  // index of object_a in Level::objects
};

// Seeds are derive_key(namespaced_seed("eval", master_seed), i), disjoint
// from the train/<seed> namespace. Throws InvalidArgument when n_levels < 1.
LevelSet build_level_set(const TestScenario& scenario, int n_levels, std::uint64_t master_seed);

// {format_version, rng_algorithm, scenario, master_seed, level_seeds}. Levels
// are regenerated from their seeds, never stored expanded. Reading checks
// the version, the RNG id and that every seed re-derives.
nlohmann::json level_set_to_json(const LevelSet& set);
LevelSet level_set_from_json(const nlohmann::json& j);

enum class Outcome : std::uint8_t { ReachedA, ReachedB, Timeout };
std::string_view outcome_name(Outcome o);

struct EpisodeRecord {
  std::uint64_t level_seed = 0;
  Outcome outcome = Outcome::Timeout;
  int length = 0;
  bool crossed_other = false;  // object_b ended the episode
};

// A batch policy. Frames are 64x64x3 agent views, one per state.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual bool needs_frames() const { return true; }
  // Empty means the policy works on any geometry.
  virtual std::string geometry_hash() const { return {}; }
  virtual void logits(std::span<const std::uint8_t> frames, std::span<const EpisodeState> states,
                      std::vector<std::array<double, 4>>& out) = 0;
};

class CheckpointPolicy final : public Policy {
 public:
  explicit CheckpointPolicy(std::shared_ptr<const Checkpoint> cp);
  std::string geometry_hash() const override { return cp_->env_config_hash; }
  void logits(std::span<const std::uint8_t> frames, std::span<const EpisodeState> states,
              std::vector<std::array<double, 4>>& out) override;
  const Checkpoint& checkpoint() const { return *cp_; }

 private:
  std::shared_ptr<const Checkpoint> cp_;
  ForwardCache<float> cache_;
};

// Uniform over the four actions.
class RandomPolicy final : public Policy {
 public:
  bool needs_frames() const override { return false; }
  void logits(std::span<const std::uint8_t>, std::span<const EpisodeState> states,
              std::vector<std::array<double, 4>>& out) override {
    out.assign(states.size(), {0.0, 0.0, 0.0, 0.0});
  }
};

struct ActionMode {
  enum class Kind : std::uint8_t { Sample, Greedy };
  Kind kind = Kind::Sample;
  std::uint64_t seed = 0;

  static ActionMode sample(std::uint64_t seed) { return {Kind::Sample, seed}; }
  static ActionMode greedy() { return {Kind::Greedy, 0}; }
};

// Throws CheckpointError(HashMismatch) when the policy was trained on another
// geometry.
EpisodeRecord run_episode(Policy& policy, const Level& level, std::size_t a_index, ActionMode mode);

struct PreferenceStats {
  double frac_a = 0.0;
  double frac_b = 0.0;
  double frac_timeout = 0.0;
  double mean_ep_len = 0.0;  // timeouts count at max_steps
  double median_ep_len = 0.0;
  std::size_t n = 0;
};

PreferenceStats summarize(std::span<const EpisodeRecord> records);

struct EvalResult {
  PreferenceStats stats;
  std::vector<EpisodeRecord> records;  // in level-set order
};

// Episodes run in lockstep chunks of `batch`; results do not depend on it
// beyond float rounding in the network.
EvalResult evaluate(Policy& policy, const LevelSet& set, ActionMode mode, int batch = 64);

struct IncidentalBaseline {
  double rate = 0.0;       // reached_b / (reached_a + reached_b)
  double threshold = 1.0;  // full-preference bar, 1 - rate
  std::size_t reached_a = 0;
  std::size_t reached_b = 0;
  std::size_t timeouts = 0;
};

IncidentalBaseline incidental_baseline(std::span<const EpisodeRecord> records);
IncidentalBaseline incidental_baseline(Policy& policy, const TestScenario& base, int n_levels,
                                       std::uint64_t master_seed, ActionMode mode);

struct SummaryRow {
  std::uint64_t agent_seed = 0;
  std::string scenario_id;
  PreferenceStats stats;
};

struct EpisodeRow {
  std::uint64_t agent_seed = 0;
  std::string scenario_id;
  EpisodeRecord record;
};

struct CellFailure {
  std::uint64_t agent_seed = 0;
  std::string scenario_id;
  std::string message;
};

struct MatrixResult {
  AgentFeatureMatrix matrix;
  std::vector<SummaryRow> summaries;  // agent-major, scenarios in given order
  std::vector<EpisodeRow> episodes;
  std::vector<CellFailure> failures;
};

struct MatrixOptions {
  int n_levels = 1000;
  std::uint64_t master_seed = 0;
  ActionMode mode;
  int threads = 0;  // 0 = hardware concurrency
  int batch = 64;
};

// Every (agent, scenario) cell is evaluated independently; a failed cell is
// left missing in the matrix and listed in failures.
MatrixResult scenario_matrix(std::span<const std::shared_ptr<const Checkpoint>> agents,
                             std::span<const TestScenario> scenarios, const MatrixOptions& options);

std::string episodes_csv(std::span<const EpisodeRow> rows);
std::string summary_csv(std::span<const SummaryRow> rows);

// {"<id>": {"object_a": "red_line", "object_b": "yellow_gem",
//           "background": "black", "max_steps": 500, "grid_size": 5}, ...}
// Returned in sorted id order. Throws ParseError on unknown fields.
std::vector<TestScenario> scenarios_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TestScenario& s);

}  // namespace mazelab
