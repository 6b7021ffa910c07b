#include <doctest.h>

#include <fstream>

#include "rollplan/config.hpp"
#include "temp_dir.hpp"

using namespace rollplan;

TEST_CASE("defaults validate and round-trip") {
  const ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  const std::string text = serialise_config(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(serialise_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(c.task_templates().size() == 4);
}

TEST_CASE("values are read into their sections") {
  const ExperimentConfig c = parse_config(
      "[planner]\nnum_candidates = 9\nbackend = dynamics\nresample_after_first = true\n"
      "[train]\nl_train_schedule = 2, 3\nlearning_rate = 5e-4\n"
      "[experiment]\nseeds = 1, 2, 3\ntasks = stack_blocks\n");
  CHECK(c.planner.num_candidates == 9);
  CHECK(c.planner.backend == Backend::dynamics);
  CHECK(c.planner.resample_after_first);
  CHECK(c.train.l_train_schedule == std::vector<int>{2, 3});
  CHECK(c.train.learning_rate == 5e-4);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.task_templates().at(0).name == "stack_blocks");
  // Unset keys keep their defaults.
  CHECK(c.planner.rollout_length == 10);
}

TEST_CASE("round trip preserves non-default values") {
  ExperimentConfig c;
  c.reward.w_gap = 0.1;
  c.planner.temperature = 1.0 / 3.0;
  c.dynamics.num_mix_blocks = 3;
  c.output_dir = "runs/x";
  const ExperimentConfig back = parse_config(serialise_config(c));
  CHECK(back.reward.w_gap == c.reward.w_gap);
  CHECK(back.planner.temperature == c.planner.temperature);
  CHECK(back.dynamics.num_mix_blocks == 3);
  CHECK(back.output_dir == "runs/x");
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(back) != config_hash(ExperimentConfig{}));
}

TEST_CASE("bad input is rejected") {
  CHECK_THROWS_AS(parse_config("[planner]\nnum_candidatez = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[plan]\nnum_candidates = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[planner]\nnum_candidates = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[planner]\nnum_candidates = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[planner]\nbackend = sim\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[planner]\nresample_after_first = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nl_train_schedule = 1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\ntasks = fold_towel\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[reward]\nmin_confidence = 2\n"), ConfigError);
}

TEST_CASE("unknown key error names the key") {
  try {
    parse_config("[reward]\nw_gapp = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("w_gapp") != std::string::npos);
  }
}

TEST_CASE("load from file") {
  test::TempDir dir;
  {
    std::ofstream out(dir / "c.ini");
    out << "# comment\n[planner]\nrollout_length = 4\n";
  }
  CHECK(load_config(dir / "c.ini").planner.rollout_length == 4);
  CHECK_THROWS_AS(load_config(dir / "missing.ini"), ConfigError);
}
