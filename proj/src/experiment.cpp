#include "mazelab/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "mazelab/errors.hpp"
#include "mazelab/rng.hpp"
#include "mazelab/serialization.hpp"

namespace mazelab {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw ParseError(where + "." + key + ": unknown field");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

EvalSettings eval_from_json(const json& j) {
  reject_unknown(j, "eval", {"n_levels", "master_seed", "mode", "action_seed", "batch"});
  EvalSettings e;
  read(j, "n_levels", e.n_levels, "eval");
  read(j, "master_seed", e.master_seed, "eval");
  read(j, "batch", e.batch, "eval");
  read(j, "action_seed", e.mode.seed, "eval");
  std::string mode = "sample";
  read(j, "mode", mode, "eval");
  if (mode == "greedy")
    e.mode.kind = ActionMode::Kind::Greedy;
  else if (mode != "sample")
    throw ParseError("eval.mode: expected 'sample' or 'greedy', got '" + mode + "'");
  if (e.n_levels < 1) throw ParseError("eval.n_levels: must be >= 1");
  if (e.batch < 1) throw ParseError("eval.batch: must be >= 1");
  return e;
}

AnalysisSettings analysis_from_json(const json& j) {
  reject_unknown(j, "analysis",
                 {"pairs", "triples", "z_threshold", "worse_than_random", "unique_side_fraction",
                  "measured_random_mean"});
  AnalysisSettings a;
  if (j.contains("pairs")) {
    for (const auto& p : j.at("pairs")) {
      reject_unknown(p, "analysis.pairs", {"x", "y"});
      ScenarioPair sp;
      read(p, "x", sp.x, "analysis.pairs");
      read(p, "y", sp.y, "analysis.pairs");
      if (sp.x.empty() || sp.y.empty()) throw ParseError("analysis.pairs: x and y are required");
      a.pairs.push_back(sp);
    }
  }
  if (j.contains("triples")) {
    for (const auto& t : j.at("triples")) {
      reject_unknown(t, "analysis.triples", {"label", "ab", "bc", "ca"});
      PreferenceTriple pt;
      read(t, "label", pt.label, "analysis.triples");
      read(t, "ab", pt.ab, "analysis.triples");
      read(t, "bc", pt.bc, "analysis.triples");
      read(t, "ca", pt.ca, "analysis.triples");
      if (pt.ab.empty() || pt.bc.empty() || pt.ca.empty())
        throw ParseError("analysis.triples: ab, bc and ca are required");
      if (pt.label.empty()) pt.label = pt.ab + "|" + pt.bc + "|" + pt.ca;
      a.triples.push_back(pt);
    }
  }
  read(j, "z_threshold", a.outliers.z_threshold, "analysis");
  read(j, "worse_than_random", a.outliers.worse_than_random, "analysis");
  read(j, "unique_side_fraction", a.outliers.unique_side_fraction, "analysis");
  if (j.contains("measured_random_mean")) {
    double v = 0.0;
    read(j, "measured_random_mean", v, "analysis");
    a.outliers.measured_random_mean = v;
  }
  return a;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  env.objects = {ObjectSpec{Shape::Line, Colour::Yellow, Role::Target}};
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, "config", {"experiment", "env", "ppo", "network", "eval", "scenarios", "analysis"});
  ExperimentConfig c;
  read(j, "experiment", c.experiment, "config");
  if (c.experiment.empty() || c.experiment.find('/') != std::string::npos)
    throw ParseError("config.experiment: must be a non-empty name without '/'");
  if (j.contains("env")) c.env = level_config_from_json(j.at("env"));
  if (j.contains("ppo")) c.ppo = ppo_config_from_json(j.at("ppo"));
  if (j.contains("network")) c.network = network_spec_from_json(j.at("network"));
  if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  if (j.contains("scenarios")) c.scenarios = scenarios_from_json(j.at("scenarios"));
  if (j.contains("analysis")) c.analysis = analysis_from_json(j.at("analysis"));
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

json to_json(const EvalSettings& e) {
  return {{"n_levels", e.n_levels},
          {"master_seed", e.master_seed},
          {"mode", e.mode.kind == ActionMode::Kind::Greedy ? "greedy" : "sample"},
          {"action_seed", e.mode.seed},
          {"batch", e.batch}};
}

json to_json(const AnalysisSettings& a) {
  json pairs = json::array();
  for (const auto& p : a.pairs) pairs.push_back({{"x", p.x}, {"y", p.y}});
  json triples = json::array();
  for (const auto& t : a.triples) triples.push_back({{"label", t.label}, {"ab", t.ab}, {"bc", t.bc}, {"ca", t.ca}});
  json j = {{"pairs", pairs},
            {"triples", triples},
            {"z_threshold", a.outliers.z_threshold},
            {"worse_than_random", a.outliers.worse_than_random},
            {"unique_side_fraction", a.outliers.unique_side_fraction}};
  if (a.outliers.measured_random_mean) j["measured_random_mean"] = *a.outliers.measured_random_mean;
  return j;
}

json to_json(const ExperimentConfig& c) {
  json scenarios = json::object();
  for (const auto& s : c.scenarios) scenarios[s.id] = to_json(s);
  return {{"experiment", c.experiment},   {"env", to_json(c.env)},   {"ppo", to_json(c.ppo)},
          {"network", to_json(c.network)}, {"eval", to_json(c.eval)}, {"scenarios", scenarios},
          {"analysis", to_json(c.analysis)}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunRecorder::RunRecorder(std::filesystem::path dir, std::string command, json config)
    : dir_(std::move(dir)), command_(std::move(command)), config_(std::move(config)), started_(utc_timestamp()) {
  namespace fs = std::filesystem;
  if (fs::exists(dir_) && !(fs::is_directory(dir_) && fs::is_empty(dir_)))
    throw InvalidArgument("refusing to overwrite existing run directory " + dir_.string());
  fs::create_directories(dir_);
}

json RunRecorder::finish(const std::string& status) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir_);
    if (rel == "manifest.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json inventory = json::array();
  for (const auto& rel : files)
    inventory.push_back({{"path", rel.generic_string()},
                         {"sha256", sha256_file(dir_ / rel)},
                         {"bytes", fs::file_size(dir_ / rel)}});
  json m = {{"command", command_},
            {"status", status},
            {"config", config_},
            {"tool_version", kToolVersion},
            {"rng_algorithm", kRngAlgorithmId},
            {"started_at", started_},
            {"finished_at", utc_timestamp()},
            {"files", inventory},
            {"warnings", warnings_}};
  for (const auto& [k, v] : extra_.items()) m[k] = v;
  write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  return m;
}

std::filesystem::path run_directory(const std::filesystem::path& root, const std::string& experiment,
                                    const std::string& command, const std::optional<std::string>& run_id) {
  const std::filesystem::path base = root / experiment / command;
  if (run_id) {
    if (run_id->empty() || run_id->find('/') != std::string::npos)
      throw InvalidArgument("run id must be a non-empty name without '/'");
    return base / *run_id;
  }
  std::string stamp = utc_timestamp();
  std::erase(stamp, ':');
  std::erase(stamp, '-');
  for (int n = 0;; ++n) {
    const auto candidate = base / (stamp + (n ? "-" + std::to_string(n) : ""));
    if (!std::filesystem::exists(candidate)) return candidate;
  }
}

std::vector<std::string> verify_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ParseError("cannot open manifest " + manifest.string());
  const json m = json::parse(in);
  const auto dir = manifest.parent_path();
  std::vector<std::string> bad;
  for (const auto& f : m.at("files")) {
    const auto path = dir / f.at("path").get<std::string>();
    if (!std::filesystem::exists(path) || sha256_file(path) != f.at("sha256").get<std::string>() ||
        std::filesystem::file_size(path) != f.at("bytes").get<std::uintmax_t>())
      bad.push_back(f.at("path").get<std::string>());
  }
  return bad;
}

}  // namespace mazelab
