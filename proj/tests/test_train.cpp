#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mazelab/errors.hpp"
#include "mazelab/train.hpp"

using namespace mazelab;
namespace fs = std::filesystem;

namespace {

LevelConfig yellow_line() {
  LevelConfig c;
  c.objects = {{Shape::Line, Colour::Yellow, Role::Target}};
  return c;
}

PPOConfig small(std::int64_t steps) {
  PPOConfig p;
  p.num_envs = 2;
  p.steps_per_env = 64;
  p.minibatches = 2;
  p.epochs = 2;
  p.total_steps = steps;
  return p;
}

TrainOptions small_net() {
  TrainOptions o;
  o.network.conv = {{4, 3, 2}, {4, 3, 2}};
  o.network.hidden = 16;
  return o;
}

}  // namespace

TEST_CASE("zero steps returns the initial parameters") {
  const auto r = train(yellow_line(), small(0), 5, small_net());
  CHECK(r.curve.empty());
  CHECK(r.checkpoint.total_steps == 0);
  CHECK(r.checkpoint.params.values == init_params<float>(small_net().network, 5).values);
  CHECK(r.checkpoint.training_seed == 5);
  CHECK(r.checkpoint.ppo.seed == 5);
}

TEST_CASE("training is deterministic for a fixed seed") {
  int calls = 0;
  TrainOptions opts = small_net();
  opts.on_update = [&](const CurvePoint&) { ++calls; };
  const auto a = train(yellow_line(), small(300), 11, opts);
  const auto b = train(yellow_line(), small(300), 11, small_net());
  const auto c = train(yellow_line(), small(300), 12, small_net());
  // ceil(300 / 128) updates.
  CHECK(calls == 3);
  CHECK(a.curve.size() == 3);
  CHECK(a.checkpoint.total_steps == 384);
  CHECK(checkpoint_hash(a.checkpoint) == checkpoint_hash(b.checkpoint));
  CHECK(checkpoint_hash(a.checkpoint) != checkpoint_hash(c.checkpoint));
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].step == 128 * static_cast<std::int64_t>(i + 1));
    CHECK(a.curve[i].stats.minibatch_steps == 4);
    CHECK(std::isfinite(a.curve[i].stats.grad_norm));
  }
}

TEST_CASE("training level seeds are distinct across envs and episodes") {
  std::set<std::uint64_t> seen;
  for (int e = 0; e < 8; ++e)
    for (std::uint64_t ep = 0; ep < 500; ++ep) seen.insert(training_level_seed(3, e, ep));
  CHECK(seen.size() == 4000);
  CHECK(training_level_seed(3, 0, 0) != training_level_seed(4, 0, 0));
}

TEST_CASE("bad training configs") {
  LevelConfig none;
  CHECK_THROWS_AS(train(none, small(10), 0, small_net()), InvalidConfig);
  TrainOptions wrong = small_net();
  wrong.network.height = 32;
  CHECK_THROWS_AS(train(yellow_line(), small(10), 0, wrong), ShapeError);
  PPOConfig bad = small(10);
  bad.lam = 2.0;
  CHECK_THROWS_AS(train(yellow_line(), bad, 0, small_net()), InvalidConfig);
}

TEST_CASE("curve CSV") {
  std::vector<CurvePoint> curve(2);
  curve[0].step = 2048;
  curve[0].mean_return = std::nan("");
  curve[0].mean_ep_len = std::nan("");
  curve[1].step = 4096;
  curve[1].mean_return = 10.0;
  curve[1].mean_ep_len = 37.5;
  const fs::path p = fs::temp_directory_path() / "mazelab_test_curve.csv";
  write_curve_csv(p, curve);
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "step,mean_return,mean_ep_len\n2048,,\n4096,10,37.5\n");
  fs::remove(p);
}
