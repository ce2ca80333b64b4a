// mazelab: asset generation, training sweeps, evaluation, analysis and
// rendering studies. Every command writes into
// runs/<experiment>/<command>/<run_id>/ and finishes with manifest.json.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mazelab/analysis.hpp"
#include "mazelab/checkpoint.hpp"
#include "mazelab/errors.hpp"
#include "mazelab/eval.hpp"
#include "mazelab/experiment.hpp"
#include "mazelab/image_io.hpp"
#include "mazelab/render.hpp"
#include "mazelab/serialization.hpp"
#include "mazelab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mazelab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr const char* kCheckpointName = "checkpoint.mzl";

struct Common {
  std::string runs_root = "runs";
  std::string experiment;
  std::string run_id;
  std::string out;
  std::string config;

  ExperimentConfig load() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : load_experiment(config);
    if (!experiment.empty()) c.experiment = experiment;
    return c;
  }

  fs::path dir(const ExperimentConfig& c, const std::string& command) const {
    if (!out.empty()) return out;
    return run_directory(runs_root, c.experiment, command,
                         run_id.empty() ? std::nullopt : std::optional<std::string>(run_id));
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  cmd->add_option("--runs-dir", c.runs_root, "Root of the results tree")->capture_default_str();
  cmd->add_option("--experiment", c.experiment, "Experiment name (overrides the config)");
  cmd->add_option("--run-id", c.run_id, "Run id (default: UTC timestamp)");
  cmd->add_option("--out", c.out, "Write into this directory instead of the results tree");
  if (with_config) cmd->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
}

// ---- gen-assets -----------------------------------------------------------

int cmd_gen_assets(const Common& common, int scale) {
  const ExperimentConfig cfg = common.load();
  RunRecorder run(common.dir(cfg, "gen-assets"), "gen-assets", {{"scale", scale}});
  std::vector<Sprite> sheet;
  for (Shape shape : {Shape::Line, Shape::Gem})
    for (Colour colour : kAllColours) {
      Sprite s = make_sprite(shape, colour);
      write_png(run.dir() / (object_id({shape, colour, Role::Target}) + ".png"), sprite_image(s, scale));
      sheet.push_back(std::move(s));
    }
  Sprite mouse = make_sprite(Shape::Mouse, kMouseColour);
  write_png(run.dir() / "mouse.png", sprite_image(mouse, scale));
  sheet.push_back(std::move(mouse));
  write_png(run.dir() / "contact_sheet.png", contact_sheet(sheet, scale, kGreyBackground));
  run.finish("ok");
  std::cout << "wrote " << sheet.size() << " sprites to " << run.dir().string() << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw InvalidArgument("seed range must look like A..B");
  const std::uint64_t a = std::stoull(text.substr(0, dots));
  const std::uint64_t b = std::stoull(text.substr(dots + 2));
  if (b < a) throw InvalidArgument("seed range " + text + " is empty");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
  return seeds;
}

int cmd_train(const Common& common, std::vector<std::uint64_t> seeds, const std::string& range, int jobs,
              std::int64_t total_steps, bool quiet) {
  ExperimentConfig cfg = common.load();
  if (total_steps > 0) cfg.ppo.total_steps = total_steps;
  cfg.ppo.validate();
  cfg.network.validate();
  if (!range.empty()) {
    auto more = parse_seed_range(range);
    seeds.insert(seeds.end(), more.begin(), more.end());
  }
  if (seeds.empty()) seeds.push_back(0);
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  json resolved = to_json(cfg);
  RunRecorder run(common.dir(cfg, "train"), "train", resolved);

  struct JobResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::string checkpoint_hash;
    double final_mean_ep_len = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<JobResult> results(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      const std::uint64_t seed = seeds[i];
      JobResult& r = results[i];
      r.seed = seed;
      const fs::path dir = run.dir() / ("seed-" + std::to_string(seed));
      try {
        RunRecorder job(dir, "train", resolved);
        job.note("training_seed", seed);
        TrainOptions opts;
        opts.network = cfg.network;
        if (!quiet)
          opts.on_update = [&](const CurvePoint& p) {
            if (p.step % (cfg.ppo.num_envs * cfg.ppo.steps_per_env * 25) != 0) return;
            std::lock_guard lock(log_mutex);
            std::cerr << "seed " << seed << " step " << p.step << " mean_ep_len " << p.mean_ep_len << "\n";
          };
        TrainResult tr = train(cfg.env, cfg.ppo, seed, opts);
        save_checkpoint(tr.checkpoint, dir / kCheckpointName);
        write_curve_csv(dir / "curve.csv", tr.curve);
        r.checkpoint_hash = checkpoint_hash(tr.checkpoint);
        for (auto it = tr.curve.rbegin(); it != tr.curve.rend(); ++it)
          if (std::isfinite(it->mean_ep_len)) {
            r.final_mean_ep_len = it->mean_ep_len;
            break;
          }
        job.note("checkpoint_hash", r.checkpoint_hash);
        job.finish("ok");
        r.ok = true;
      } catch (const std::exception& e) {
        r.error = e.what();
        std::lock_guard lock(log_mutex);
        std::cerr << "seed " << seed << " failed: " << e.what() << "\n";
      }
    }
  };
  jobs = std::clamp(jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency()), 1,
                    static_cast<int>(seeds.size()));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  json summary = json::array();
  std::size_t failed = 0;
  for (const auto& r : results) {
    json row = {{"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      row["checkpoint"] = "seed-" + std::to_string(r.seed) + "/" + kCheckpointName;
      row["checkpoint_hash"] = r.checkpoint_hash;
      if (std::isfinite(r.final_mean_ep_len)) row["final_mean_ep_len"] = r.final_mean_ep_len;
    } else {
      row["error"] = r.error;
      ++failed;
    }
    summary.push_back(row);
  }
  write_file_atomic(run.dir() / "sweep.json", summary.dump(2) + "\n");
  run.note("seeds", seeds);
  run.finish(failed ? "partial" : "ok");
  std::cout << seeds.size() - failed << "/" << seeds.size() << " training jobs succeeded in " << run.dir().string()
            << "\n";
  return failed ? kExitPartial : kExitOk;
}

// ---- eval -----------------------------------------------------------------

std::vector<fs::path> expand_checkpoints(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().filename() == kCheckpointName) out.push_back(e.path());
    } else if (fs::is_regular_file(in)) {
      out.emplace_back(in);
    } else {
      throw InvalidArgument("no such checkpoint or directory: " + in);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_eval(const Common& common, const std::vector<std::string>& inputs, const std::string& scenario_file,
             std::optional<int> n_levels, std::optional<std::uint64_t> master_seed, const std::string& mode,
             std::optional<std::uint64_t> action_seed, int threads) {
  ExperimentConfig cfg = common.load();
  if (!scenario_file.empty()) {
    std::ifstream in(scenario_file);
    if (!in) throw ParseError("cannot open " + scenario_file);
    json j = json::parse(in);
    cfg.scenarios = scenarios_from_json(j.contains("scenarios") ? j.at("scenarios") : j);
  }
  if (cfg.scenarios.empty()) throw InvalidConfig("no scenarios configured");
  if (n_levels) cfg.eval.n_levels = *n_levels;
  if (master_seed) cfg.eval.master_seed = *master_seed;
  if (action_seed) cfg.eval.mode.seed = *action_seed;
  if (mode == "greedy")
    cfg.eval.mode.kind = ActionMode::Kind::Greedy;
  else if (mode == "sample")
    cfg.eval.mode.kind = ActionMode::Kind::Sample;
  else if (!mode.empty())
    throw InvalidArgument("--mode must be sample or greedy");
  if (cfg.eval.n_levels < 1) throw InvalidArgument("--n-levels must be >= 1");

  const auto paths = expand_checkpoints(inputs);
  if (paths.empty()) throw InvalidArgument("no checkpoints found");

  json resolved = {{"eval", to_json(cfg.eval)}, {"scenarios", json::object()}, {"checkpoints", json::array()}};
  for (const auto& s : cfg.scenarios) resolved["scenarios"][s.id] = to_json(s);
  RunRecorder run(common.dir(cfg, "eval"), "eval", json{});

  std::vector<std::shared_ptr<const Checkpoint>> agents;
  json load_failures = json::array();
  std::map<std::uint64_t, fs::path> by_seed;
  for (const auto& p : paths) {
    try {
      auto cp = std::make_shared<const Checkpoint>(load_checkpoint(p));
      if (auto [it, fresh] = by_seed.emplace(cp->training_seed, p); !fresh)
        throw InvalidArgument("training seed " + std::to_string(cp->training_seed) + " also in " + it->second.string());
      resolved["checkpoints"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}, {"seed", cp->training_seed}});
      agents.push_back(std::move(cp));
    } catch (const Error& e) {
      load_failures.push_back({{"path", p.string()}, {"error", e.what()}});
      std::cerr << "skipping " << p.string() << ": " << e.what() << "\n";
    }
  }
  std::sort(agents.begin(), agents.end(), [](const auto& a, const auto& b) { return a->training_seed < b->training_seed; });

  MatrixOptions opts;
  opts.n_levels = cfg.eval.n_levels;
  opts.master_seed = cfg.eval.master_seed;
  opts.mode = cfg.eval.mode;
  opts.batch = cfg.eval.batch;
  opts.threads = threads;
  const MatrixResult res = scenario_matrix(agents, cfg.scenarios, opts);

  for (const auto& s : cfg.scenarios)
    write_file_atomic(run.dir() / "levelsets" / (s.id + ".json"),
                      level_set_to_json(build_level_set(s, opts.n_levels, opts.master_seed)).dump() + "\n");
  write_file_atomic(run.dir() / "episodes.csv", episodes_csv(res.episodes));
  write_file_atomic(run.dir() / "summary.csv", summary_csv(res.summaries));
  write_matrix_csv(run.dir() / "matrix.csv", res.matrix);
  json failures = load_failures;
  for (const auto& f : res.failures)
    failures.push_back({{"agent_seed", f.agent_seed}, {"scenario_id", f.scenario_id}, {"error", f.message}});
  if (!failures.empty()) write_file_atomic(run.dir() / "failures.json", failures.dump(2) + "\n");

  // The config is only known in full after checkpoints are resolved.
  run.note("config", resolved);
  run.finish(failures.empty() ? "ok" : "partial");
  std::cout << res.summaries.size() << " summary rows, " << res.episodes.size() << " episodes, " << failures.size()
            << " failures in " << run.dir().string() << "\n";
  return failures.empty() ? kExitOk : kExitPartial;
}

// ---- analyze --------------------------------------------------------------

int cmd_analyze(const Common& common, const std::string& matrix_path) {
  const ExperimentConfig cfg = common.load();
  const AgentFeatureMatrix m = read_matrix_csv(matrix_path);
  json resolved = {{"matrix", matrix_path}, {"matrix_sha256", sha256_file(matrix_path)}, {"analysis", to_json(cfg.analysis)}};
  RunRecorder run(common.dir(cfg, "analyze"), "analyze", resolved);
  bool partial = false;

  json regressions = json::array();
  for (const auto& p : cfg.analysis.pairs) {
    json row = {{"x", p.x}, {"y", p.y}};
    try {
      const CorrelationResult c = channel_correlation(m, p.x, p.y);
      row.update({{"slope", c.fit.slope},
                  {"intercept", c.fit.intercept},
                  {"r_squared", c.fit.r_squared},
                  {"n", c.fit.n},
                  {"dropped", c.dropped}});
    } catch (const Error& e) {
      row["error"] = e.what();
      run.warn("regression " + p.x + " -> " + p.y + ": " + e.what());
      partial = true;
    }
    regressions.push_back(row);
  }
  write_file_atomic(run.dir() / "regressions.json", regressions.dump(2) + "\n");

  try {
    OutlierReport report = detect_outliers(m, cfg.analysis.outliers);
    const TransitivityResult t = transitivity_check(m, cfg.analysis.triples);
    merge_transitivity(report, t);
    for (const auto& s : t.skipped) run.warn("transitivity triple " + s + " skipped: missing scenario");
    json out = {{"z_threshold", report.z_threshold},
                {"random_reference", report.random_reference},
                {"flags", outlier_report_json(report)}};
    if (report.measured_random_mean) out["measured_random_mean"] = *report.measured_random_mean;
    write_file_atomic(run.dir() / "outliers.json", out.dump(2) + "\n");
    json tv = json::array();
    for (const auto& v : t.violations)
      tv.push_back({{"agent_seed", v.agent_seed}, {"label", v.label}, {"prefs", v.prefs},
                    {"direction", v.reverse ? "reverse" : "forward"}});
    write_file_atomic(run.dir() / "transitivity.json", json{{"violations", tv}, {"skipped", t.skipped}}.dump(2) + "\n");
  } catch (const InsufficientData& e) {
    run.warn(std::string("outlier detection skipped: ") + e.what());
    partial = true;
  }

  for (const auto& f : m.features) {
    if (!f.ends_with("/pref")) continue;
    const std::string scenario = f.substr(0, f.size() - 5);
    if (scatter_points(m, scenario).empty()) {
      run.warn("scenario " + scenario + " has no complete rows; scatter skipped");
      std::cerr << "warning: scenario " << scenario << " has no complete rows; skipped\n";
      continue;
    }
    emit_scatter(m, scenario, run.dir() / "scatter" / scenario);
  }
  run.finish(partial ? "partial" : "ok");
  std::cout << "analysis written to " << run.dir().string() << "\n";
  return partial ? kExitPartial : kExitOk;
}

// ---- study ----------------------------------------------------------------

int cmd_study_downsample(const Common& common, std::vector<int> grids, int n, std::vector<std::string> methods,
                         std::uint64_t seed) {
  const ExperimentConfig cfg = common.load();
  std::vector<DownsampleMethod> ms;
  for (const auto& name : methods) {
    const auto m = parse_method(name);
    if (!m) throw InvalidArgument("unknown downsample method '" + name + "'");
    ms.push_back(*m);
  }
  for (int g : grids)
    if (g < 3) throw InvalidArgument("grid sizes must be >= 3");
  RunRecorder run(common.dir(cfg, "study-downsample"), "study downsample",
                  {{"grids", grids}, {"n_levels", n}, {"methods", methods}, {"seed", seed}});
  std::ostringstream os;
  os << "grid_size,method,n_levels,line_invisible_rate,gem_invisible_rate\n";
  for (int g : grids)
    for (auto m : ms) {
      const DisappearanceRates r = disappearance_study(g, n, m, seed);
      os << g << ',' << method_name(m) << ',' << r.n_levels << ',';
      if (r.line_invisible_rate) os << *r.line_invisible_rate;
      os << ',';
      if (r.gem_invisible_rate) os << *r.gem_invisible_rate;
      os << '\n';
    }
  write_file_atomic(run.dir() / "downsample.csv", os.str());
  run.finish("ok");
  std::cout << os.str();
  return kExitOk;
}

int cmd_study_textures(const Common& common) {
  const ExperimentConfig cfg = common.load();
  RunRecorder run(common.dir(cfg, "study-textures"), "study textures", {{"textures", kTextureCount}});
  std::ostringstream means;
  means << "texture_id,mean_r,mean_g,mean_b\n";
  for (int id = 0; id < kTextureCount; ++id) {
    const auto hist = texture_histogram(texture(id));
    std::ostringstream os;
    os << "channel,bin,count\n";
    for (const auto& h : hist)
      for (int b = 0; b < 256; ++b) os << "RGB"[static_cast<int>(h.channel)] << ',' << b << ',' << h.counts[b] << '\n';
    write_file_atomic(run.dir() / ("texture_" + std::to_string(id) + ".csv"), os.str());
    write_png(run.dir() / ("texture_" + std::to_string(id) + ".png"), texture(id));
    means << id << ',' << hist[0].mean() << ',' << hist[1].mean() << ',' << hist[2].mean() << '\n';
  }
  write_file_atomic(run.dir() / "texture_means.csv", means.str());
  run.finish("ok");
  std::cout << means.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mazelab: colour vs shape preference experiments in a pixel maze"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Common common;
  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-assets", "Write sprite PNGs and a contact sheet");
  add_common(gen, common, false);
  int scale = 8;
  gen->add_option("--scale", scale, "Integer upscale of the 12 px sprites")->capture_default_str()->check(CLI::PositiveNumber);
  gen->callback([&] { action = [&] { return cmd_gen_assets(common, scale); }; });

  auto* tr = app.add_subcommand("train", "Train one agent per seed");
  add_common(tr, common);
  std::vector<std::uint64_t> seeds;
  std::string range;
  int jobs = 1;
  std::int64_t total_steps = 0;
  bool quiet = false;
  tr->add_option("--seed", seeds, "Training seed (repeatable)");
  tr->add_option("--seeds", range, "Inclusive seed range A..B");
  tr->add_option("--jobs", jobs, "Concurrent training jobs (0 = all cores)")->capture_default_str();
  tr->add_option("--total-steps", total_steps, "Override ppo.total_steps");
  tr->add_flag("--quiet", quiet, "No progress output");
  tr->callback([&] { action = [&] { return cmd_train(common, seeds, range, jobs, total_steps, quiet); }; });

  auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on the configured scenarios");
  add_common(ev, common);
  std::vector<std::string> ckpts;
  std::string scenario_file;
  std::optional<int> n_levels;
  std::optional<std::uint64_t> master_seed;
  std::optional<std::uint64_t> action_seed;
  std::string mode;
  int threads = 0;
  ev->add_option("checkpoints", ckpts, "Checkpoint files or directories searched for " + std::string(kCheckpointName))
      ->required();
  ev->add_option("--scenarios", scenario_file, "Scenario file (overrides the config's scenarios)")->check(CLI::ExistingFile);
  ev->add_option("--n-levels", n_levels, "Held-out levels per scenario");
  ev->add_option("--master-seed", master_seed, "Level-set master seed");
  ev->add_option("--mode", mode, "sample or greedy");
  ev->add_option("--action-seed", action_seed, "Seed for sampled actions");
  ev->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
  ev->callback([&] {
    action = [&] { return cmd_eval(common, ckpts, scenario_file, n_levels, master_seed, mode, action_seed, threads); };
  });

  auto* an = app.add_subcommand("analyze", "Regressions, outliers, transitivity and scatter plots");
  add_common(an, common);
  std::string matrix;
  an->add_option("matrix", matrix, "Agent-feature matrix CSV")->required()->check(CLI::ExistingFile);
  an->callback([&] { action = [&] { return cmd_analyze(common, matrix); }; });

  auto* st = app.add_subcommand("study", "Rendering studies");
  st->require_subcommand(1);
  auto* ds = st->add_subcommand("downsample", "Object disappearance under 512 -> 64 downsampling");
  add_common(ds, common, false);
  std::vector<int> grids{25};
  int n = 100;
  std::vector<std::string> methods{"nearest", "box"};
  std::uint64_t study_seed = 0;
  ds->add_option("--grid", grids, "Grid sizes")->capture_default_str();
  ds->add_option("--n", n, "Levels per grid and method")->capture_default_str();
  ds->add_option("--method", methods, "nearest and/or box")->capture_default_str();
  ds->add_option("--seed", study_seed, "Study seed")->capture_default_str();
  ds->callback([&] { action = [&] { return cmd_study_downsample(common, grids, n, methods, study_seed); }; });
  auto* tx = st->add_subcommand("textures", "Per-texture RGB histograms");
  add_common(tx, common, false);
  tx->callback([&] { action = [&] { return cmd_study_textures(common); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? code : kExitUsage;
  }
  try {
    return action();
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
}
