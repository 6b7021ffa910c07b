#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rollplan/report.hpp"
#include "temp_dir.hpp"

using namespace rollplan;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(ROLLPLAN_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<SuccessRow> load_rows(const std::filesystem::path& p) {
  std::ifstream in(p);
  return success_rows(read_csv(in));
}

}  // namespace

TEST_CASE("single greedy candidate matches the unplanned baseline") {
  test::TempDir dir;
  const auto out = (dir / "g.csv").string();
  REQUIRE(cli("run --backend env_sim --n 1 --temperature 0 --episodes 12 --seeds 4 --no-timing -o " + out) == 0);
  const auto rows = load_rows(out);
  const auto base = greedy_episodes(all_task_templates(), 12, 4, ScriptedPolicy(), 120);
  REQUIRE(rows.size() == base.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].task == base[i].task);
    CHECK(rows[i].seed == base[i].seed);
    CHECK(rows[i].success == base[i].success);
    CHECK(rows[i].steps == base[i].env_steps_used);
  }
}

TEST_CASE("reruns are byte-identical") {
  test::TempDir dir;
  const std::string args = "run --n 3 --l 4 --episodes 6 --seeds 0,1 --no-timing -o ";
  REQUIRE(cli(args + (dir / "a.csv").string()) == 0);
  REQUIRE(cli(args + (dir / "b.csv").string()) == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(load_rows(dir / "a.csv").size() == 12);
}

TEST_CASE("grid sweeps write one block per value") {
  test::TempDir dir;
  REQUIRE(cli("run --grid n=1,2 --l 3 --episodes 4 --no-timing -o " + (dir / "s.csv").string()) == 0);
  const auto rows = load_rows(dir / "s.csv");
  REQUIRE(rows.size() == 8);
  CHECK(rows.front().n == 1);
  CHECK(rows.back().n == 2);
}

TEST_CASE("collect, train, evaluate and report") {
  test::TempDir dir;
  {
    std::ofstream cfg(dir / "tiny.ini");
    cfg << "[dynamics]\ntoken_dim = 16\nchannel_hidden = 16\naction_embed_dim = 16\nnum_mix_blocks = 1\n"
        << "[train]\nphase1_epochs = 1\nphase2_epochs = 1\nl_train_schedule = 2\n";
  }
  const std::string conf = "--config " + (dir / "tiny.ini").string() + " ";
  REQUIRE(cli(conf + "collect --episodes 20 -o " + (dir / "d.bin").string()) == 0);
  REQUIRE(cli(conf + "train --dataset " + (dir / "d.bin").string() + " -o " + (dir / "w.bin").string()) == 0);
  REQUIRE(cli(conf + "eval-model --weights " + (dir / "w.bin").string() + " --dataset " + (dir / "d.bin").string() +
              " --horizons 1,2 -o " + (dir / "m.csv").string()) == 0);
  REQUIRE(cli(conf + "run --backend dynamics --weights " + (dir / "w.bin").string() +
              " --n 2 --l 2 --episodes 2 -o " + (dir / "r.csv").string()) == 0);
  REQUIRE(cli("report " + dir.path().string() + " -o " + (dir / "rep").string()) == 0);
  CHECK(std::filesystem::exists(dir / "rep" / "summary.md"));
  const std::string model_csv = slurp(dir / "m.csv");
  CHECK(model_csv.find("horizon,l1,ofl,extract_err") != std::string::npos);
}

TEST_CASE("usage errors exit non-zero") {
  test::TempDir dir;
  {
    std::ofstream cfg(dir / "bad.ini");
    cfg << "[planner]\nnum_candidatez = 2\n";
  }
  const auto out = (dir / "x.csv").string();
  CHECK(cli("--config " + (dir / "bad.ini").string() + " config") == 1);
  CHECK(cli("run --n 0 -o " + out) == 1);
  CHECK(cli("run --backend dynamics -o " + out) == 1);
  CHECK(cli("frobnicate") == 1);
  CHECK(cli("config") == 0);
}
