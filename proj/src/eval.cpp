#include "mazelab/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "mazelab/errors.hpp"
#include "mazelab/render.hpp"
#include "mazelab/rng.hpp"
#include "mazelab/serialization.hpp"

namespace mazelab {

void TestScenario::validate() const {
  if (object_b && object_b->shape == object_a.shape && object_b->colour == object_a.colour)
    throw InvalidConfig("scenario " + id + ": object_a and object_b are identical (" + object_id(object_a) + ")");
  if (max_steps < 1) throw InvalidConfig("scenario " + id + ": max_steps must be positive");
  if (grid_size < 3) throw InvalidConfig("scenario " + id + ": grid_size must be at least 3");
  if (background.kind == BackgroundSpec::Kind::Texture && (background.texture_id < 0 || background.texture_id >= kTextureCount))
    throw InvalidConfig("scenario " + id + ": texture id out of range");
}

std::string default_scenario_id(const TestScenario& s) {
  std::string id = object_id(s.object_a);
  if (s.object_b) id += "_vs_" + object_id(*s.object_b);
  return id + "_" + background_name(s.background);
}

std::string scenario_geometry_hash(int grid_size) { return env_geometry_hash(grid_size, NetworkSpec{}); }

std::size_t LevelSet::a_index() const {
  if (!scenario.object_b) return 0;
  return object_id(scenario.object_a) < object_id(*scenario.object_b) ? 0 : 1;
}

LevelConfig LevelSet::level_config(std::size_t i) const {
  LevelConfig cfg;
  cfg.grid_size = scenario.grid_size;
  cfg.background = scenario.background;
  cfg.max_steps = scenario.max_steps;
  cfg.seed = level_seeds.at(i);
  ObjectSpec a = scenario.object_a;
  a.role = Role::Target;
  cfg.objects.push_back(a);
  if (scenario.object_b) {
    ObjectSpec b = *scenario.object_b;
    b.role = Role::Distractor;
    if (a_index() == 0)
      cfg.objects.push_back(b);
    else
      cfg.objects.insert(cfg.objects.begin(), b);
  }
  return cfg;
}

Level LevelSet::level(std::size_t i) const { return make_level(level_config(i)); }

LevelSet build_level_set(const TestScenario& scenario, int n_levels, std::uint64_t master_seed) {
  if (n_levels < 1) throw InvalidArgument("a level set needs at least one level");
  scenario.validate();
  LevelSet set;
  set.scenario = scenario;
  set.master_seed = master_seed;
  const std::uint64_t root = namespaced_seed("eval", master_seed);
  set.level_seeds.reserve(static_cast<std::size_t>(n_levels));
  for (int i = 0; i < n_levels; ++i) set.level_seeds.push_back(derive_key(root, static_cast<std::uint64_t>(i)));
  return set;
}

nlohmann::json level_set_to_json(const LevelSet& set) {
  nlohmann::json scenario = to_json(set.scenario);
  scenario["id"] = set.scenario.id;
  return {{"format_version", 1},
          {"rng_algorithm", kRngAlgorithmId},
          {"scenario", scenario},
          {"master_seed", set.master_seed},
          {"level_seeds", set.level_seeds}};
}

LevelSet level_set_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw ParseError("level set: unsupported format_version");
    if (j.at("rng_algorithm").get<std::string>() != kRngAlgorithmId)
      throw ParseError("level set: generated with RNG " + j.at("rng_algorithm").get<std::string>());
    nlohmann::json body = j.at("scenario");
    const std::string id = body.at("id").get<std::string>();
    body.erase("id");
    TestScenario scenario = scenarios_from_json(nlohmann::json{{id, body}}).front();
    const auto seeds = j.at("level_seeds").get<std::vector<std::uint64_t>>();
    LevelSet set = build_level_set(scenario, static_cast<int>(seeds.size()), j.at("master_seed").get<std::uint64_t>());
    if (set.level_seeds != seeds) throw ParseError("level set: seeds do not match their master seed");
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("level set: ") + e.what());
  }
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::ReachedA: return "reached_a";
    case Outcome::ReachedB: return "reached_b";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

CheckpointPolicy::CheckpointPolicy(std::shared_ptr<const Checkpoint> cp) : cp_(std::move(cp)) {
  if (!cp_) throw InvalidArgument("CheckpointPolicy needs a checkpoint");
}

void CheckpointPolicy::logits(std::span<const std::uint8_t> frames, std::span<const EpisodeState> states,
                              std::vector<std::array<double, 4>>& out) {
  const int batch = static_cast<int>(states.size());
  forward(cp_->params, frames, batch, cache_);
  out.resize(states.size());
  for (int i = 0; i < batch; ++i)
    for (int a = 0; a < 4; ++a) out[i][a] = cache_.logits(i, a);
}

namespace {

void check_geometry(const Policy& policy, int grid_size) {
  const std::string have = policy.geometry_hash();
  if (have.empty()) return;
  const std::string want = scenario_geometry_hash(grid_size);
  if (have != want)
    throw CheckpointError(CheckpointError::Kind::HashMismatch,
                          "policy geometry " + have + " does not match scenario geometry " + want);
}

struct Slot {
  std::size_t index = 0;
  const Level* level = nullptr;
  std::unique_ptr<FrameRenderer> renderer;
  EpisodeState state;
  CounterRng rng;
};

// Runs every level in lockstep, feeding the policy one batched call per step.
std::vector<EpisodeRecord> run_lockstep(Policy& policy, std::span<const Level> levels,
                                        std::span<const std::uint64_t> seeds, std::size_t a_index, ActionMode mode) {
  const int input = NetworkSpec{}.input_size();
  const std::uint64_t action_root = namespaced_seed("eval/actions", mode.seed);
  std::vector<EpisodeRecord> records(levels.size());
  std::vector<Slot> active;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    Slot s;
    s.index = i;
    s.level = &levels[i];
    if (policy.needs_frames()) s.renderer = std::make_unique<FrameRenderer>(levels[i]);
    s.state = reset(levels[i]);
    s.rng = CounterRng(derive_key(action_root, seeds[i]));
    records[i].level_seed = seeds[i];
    active.push_back(std::move(s));
  }

  std::vector<std::uint8_t> frames;
  std::vector<EpisodeState> states;
  std::vector<std::array<double, 4>> logits;
  while (!active.empty()) {
    states.clear();
    for (const auto& s : active) states.push_back(s.state);
    if (policy.needs_frames()) {
      frames.resize(active.size() * static_cast<std::size_t>(input));
      for (std::size_t k = 0; k < active.size(); ++k)
        active[k].renderer->draw(active[k].state, std::span(frames).subspan(k * input, input));
    } else {
      frames.clear();
    }
    policy.logits(frames, states, logits);
    if (logits.size() != active.size()) throw ShapeError("policy returned the wrong number of logit rows");

    std::vector<Slot> still;
    still.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      Slot& s = active[k];
      const std::span<const double, 4> z(logits[k]);
      const Action a = mode.kind == ActionMode::Kind::Greedy ? greedy_action(z) : sample_action(z, s.rng).action;
      const StepOutcome out = step(s.state, a);
      if (!out.terminated) {
        s.state = out.next_state;
        still.push_back(std::move(s));
        continue;
      }
      EpisodeRecord& r = records[s.index];
      r.length = out.next_state.steps_taken;
      const Termination& t = out.next_state.termination;
      if (t.kind == Termination::Kind::ReachedObject) {
        r.outcome = t.object_index == a_index ? Outcome::ReachedA : Outcome::ReachedB;
        r.crossed_other = r.outcome == Outcome::ReachedB;
      } else {
        r.outcome = Outcome::Timeout;
      }
    }
    active = std::move(still);
  }
  return records;
}

}  // namespace

EpisodeRecord run_episode(Policy& policy, const Level& level, std::size_t a_index, ActionMode mode) {
  check_geometry(policy, level.config.grid_size);
  const std::uint64_t seed = level.config.seed;
  return run_lockstep(policy, std::span(&level, 1), std::span(&seed, 1), a_index, mode).front();
}

PreferenceStats summarize(std::span<const EpisodeRecord> records) {
  PreferenceStats s;
  s.n = records.size();
  if (records.empty()) return s;
  std::size_t na = 0;
  std::size_t nb = 0;
  std::vector<int> lengths;
  lengths.reserve(records.size());
  double total = 0.0;
  for (const auto& r : records) {
    na += r.outcome == Outcome::ReachedA;
    nb += r.outcome == Outcome::ReachedB;
    lengths.push_back(r.length);
    total += r.length;
  }
  const double n = static_cast<double>(records.size());
  s.frac_a = static_cast<double>(na) / n;
  s.frac_b = static_cast<double>(nb) / n;
  s.frac_timeout = static_cast<double>(records.size() - na - nb) / n;
  s.mean_ep_len = total / n;
  std::sort(lengths.begin(), lengths.end());
  const std::size_t mid = lengths.size() / 2;
  s.median_ep_len = lengths.size() % 2 ? lengths[mid] : 0.5 * (lengths[mid - 1] + lengths[mid]);
  return s;
}

EvalResult evaluate(Policy& policy, const LevelSet& set, ActionMode mode, int batch) {
  if (batch < 1) throw InvalidArgument("evaluation batch must be positive");
  check_geometry(policy, set.scenario.grid_size);
  EvalResult result;
  result.records.reserve(set.level_seeds.size());
  const std::size_t a_index = set.a_index();
  for (std::size_t start = 0; start < set.level_seeds.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(set.level_seeds.size(), start + static_cast<std::size_t>(batch));
    std::vector<Level> levels;
    levels.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) levels.push_back(set.level(i));
    auto chunk = run_lockstep(policy, levels, std::span(set.level_seeds).subspan(start, end - start), a_index, mode);
    result.records.insert(result.records.end(), chunk.begin(), chunk.end());
  }
  result.stats = summarize(result.records);
  return result;
}

IncidentalBaseline incidental_baseline(std::span<const EpisodeRecord> records) {
  IncidentalBaseline b;
  for (const auto& r : records) {
    b.reached_a += r.outcome == Outcome::ReachedA;
    b.reached_b += r.outcome == Outcome::ReachedB;
    b.timeouts += r.outcome == Outcome::Timeout;
  }
  const std::size_t finished = b.reached_a + b.reached_b;
  b.rate = finished ? static_cast<double>(b.reached_b) / static_cast<double>(finished) : 0.0;
  b.threshold = 1.0 - b.rate;
  return b;
}

IncidentalBaseline incidental_baseline(Policy& policy, const TestScenario& base, int n_levels,
                                       std::uint64_t master_seed, ActionMode mode) {
  if (!base.object_b) throw InvalidArgument("incidental baseline needs a second object");
  const LevelSet set = build_level_set(base, n_levels, master_seed);
  return incidental_baseline(evaluate(policy, set, mode).records);
}

MatrixResult scenario_matrix(std::span<const std::shared_ptr<const Checkpoint>> agents,
                             std::span<const TestScenario> scenarios, const MatrixOptions& options) {
  std::vector<std::uint64_t> seeds;
  for (const auto& a : agents) seeds.push_back(a->training_seed);
  std::vector<std::string> features;
  for (const auto& s : scenarios) {
    features.push_back(pref_feature(s.id));
    features.push_back(len_feature(s.id));
  }
  MatrixResult result;
  result.matrix = AgentFeatureMatrix(seeds, features);

  std::vector<LevelSet> sets;
  for (const auto& s : scenarios) sets.push_back(build_level_set(s, options.n_levels, options.master_seed));

  const std::size_t cells = agents.size() * scenarios.size();
  std::vector<std::optional<EvalResult>> results(cells);
  std::vector<std::string> errors(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      const std::size_t ai = c / scenarios.size();
      const std::size_t si = c % scenarios.size();
      try {
        CheckpointPolicy policy(agents[ai]);
        results[c] = evaluate(policy, sets[si], options.mode, options.batch);
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    }
  };
  int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(cells, 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t ai = c / scenarios.size();
    const std::size_t si = c % scenarios.size();
    const std::string& sid = scenarios[si].id;
    if (!results[c]) {
      result.failures.push_back({seeds[ai], sid, errors[c]});
      continue;
    }
    const PreferenceStats& st = results[c]->stats;
    result.matrix.values(static_cast<Eigen::Index>(ai), static_cast<Eigen::Index>(2 * si)) = st.frac_a;
    result.matrix.values(static_cast<Eigen::Index>(ai), static_cast<Eigen::Index>(2 * si + 1)) = st.mean_ep_len;
    result.summaries.push_back({seeds[ai], sid, st});
    for (const auto& r : results[c]->records) result.episodes.push_back({seeds[ai], sid, r});
  }
  return result;
}

std::string episodes_csv(std::span<const EpisodeRow> rows) {
  std::ostringstream os;
  os << "agent_seed,scenario_id,level_seed,outcome,length\n";
  for (const auto& r : rows)
    os << r.agent_seed << ',' << r.scenario_id << ',' << r.record.level_seed << ',' << outcome_name(r.record.outcome)
       << ',' << r.record.length << '\n';
  return os.str();
}

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "agent_seed,scenario_id,frac_a,frac_b,frac_timeout,mean_ep_len,median_ep_len,n\n";
  for (const auto& r : rows)
    os << r.agent_seed << ',' << r.scenario_id << ',' << r.stats.frac_a << ',' << r.stats.frac_b << ','
       << r.stats.frac_timeout << ',' << r.stats.mean_ep_len << ',' << r.stats.median_ep_len << ',' << r.stats.n
       << '\n';
  return os.str();
}

std::vector<TestScenario> scenarios_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("scenarios: expected an object keyed by scenario id");
  std::vector<TestScenario> out;
  for (const auto& [id, body] : j.items()) {  // nlohmann::json keeps keys sorted
    if (!body.is_object()) throw ParseError("scenarios." + id + ": expected an object");
    TestScenario s;
    s.id = id;
    bool have_a = false;
    for (const auto& [key, v] : body.items()) {
      const std::string where = "scenarios." + id + "." + key;
      bool unknown = false;
      try {
        if (key == "object_a") {
          s.object_a = parse_object(v.get<std::string>(), Role::Target);
          have_a = true;
        } else if (key == "object_b") {
          if (!v.is_null()) s.object_b = parse_object(v.get<std::string>(), Role::Distractor);
        } else if (key == "background") {
          const auto bg = parse_background(v.get<std::string>());
          if (!bg) throw ParseError(where + ": unknown background '" + v.get<std::string>() + "'");
          s.background = *bg;
        } else if (key == "max_steps") {
          s.max_steps = v.get<int>();
        } else if (key == "grid_size") {
          s.grid_size = v.get<int>();
        } else {
          unknown = true;
        }
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": " + e.what());
      } catch (const Error& e) {
        throw ParseError(where + ": " + e.what());
      }
      if (unknown) throw ParseError(where + ": unknown field");
    }
    if (!have_a) throw ParseError("scenarios." + id + ": missing object_a");
    try {
      s.validate();
    } catch (const InvalidConfig& e) {
      throw ParseError(e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const TestScenario& s) {
  nlohmann::json j = {{"object_a", object_id(s.object_a)},
                      {"background", background_name(s.background)},
                      {"max_steps", s.max_steps},
                      {"grid_size", s.grid_size}};
  if (s.object_b) j["object_b"] = object_id(*s.object_b);
  return j;
}

}  // namespace mazelab
