#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mazelab/analysis.hpp"
#include "mazelab/env.hpp"
#include "mazelab/eval.hpp"
#include "mazelab/network.hpp"
#include "mazelab/ppo.hpp"
#include "json.hpp"

namespace mazelab {

inline constexpr std::string_view kToolVersion = "mazelab 0.1.0";

struct EvalSettings {
  int n_levels = 1000;
  std::uint64_t master_seed = 0;
  ActionMode mode;  // sample with seed 0
  int batch = 64;
};

struct ScenarioPair {
  std::string x;
  std::string y;
};

struct AnalysisSettings {
  std::vector<ScenarioPair> pairs;
  std::vector<PreferenceTriple> triples;
  OutlierOptions outliers;
};

// One file per experiment. Every section is optional and falls back to the
// defaults; unknown fields are rejected.
struct ExperimentConfig {
  std::string experiment = "default";
  LevelConfig env;
  PPOConfig ppo;
  NetworkSpec network;
  EvalSettings eval;
  std::vector<TestScenario> scenarios;
  AnalysisSettings analysis;

  ExperimentConfig();
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);
nlohmann::json to_json(const EvalSettings& e);
nlohmann::json to_json(const AnalysisSettings& a);

std::string utc_timestamp();

// Owns one results directory. The directory must not exist yet (or be empty);
// finish() inventories every file below it and writes manifest.json
// atomically.
class RunRecorder {
 public:
  RunRecorder(std::filesystem::path dir, std::string command, nlohmann::json config);

  const std::filesystem::path& dir() const { return dir_; }
  void note(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  void warn(const std::string& message) { warnings_.push_back(message); }
  nlohmann::json finish(const std::string& status);

 private:
  std::filesystem::path dir_;
  std::string command_;
  nlohmann::json config_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::vector<std::string> warnings_;
  std::string started_;
};

// runs/<experiment>/<command>/<run_id>; a missing run id becomes a fresh
// timestamped one.
std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& experiment,
                                    const std::string& command, const std::optional<std::string>& run_id);

// Files whose hash or size no longer matches the manifest, plus files missing.
std::vector<std::string> verify_manifest(const std::filesystem::path& manifest);

}  // namespace mazelab
