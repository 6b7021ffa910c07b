// Experiment driver: collect, train, eval-model, run, bench-time, report.
//
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rollplan/config.hpp"
#include "rollplan/metrics.hpp"
#include "rollplan/report.hpp"

namespace {

using namespace rollplan;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  bool quiet = false;
};

/// Progress and summaries; silenced by --quiet.
std::ostream& info(const Globals& g) {
  static std::ostream null(nullptr);
  return g.quiet ? null : std::cout;
}

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  return cfg;
}

void revalidate(const ExperimentConfig& cfg) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

template <typename Write>
void write_file(const std::string& path, Write&& write) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write(out);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("bad integer '" + item + "' in " + what);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + " is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct CollectArgs {
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
  std::string out;
};

int cmd_collect(const Globals& g, const CollectArgs& a) {
  ExperimentConfig cfg = base_config(g);
  if (a.episodes) cfg.collect_episodes = *a.episodes;
  if (a.seed) cfg.collect_seed = *a.seed;
  if (a.temperature) cfg.expert_temperature = *a.temperature;
  revalidate(cfg);

  const ScriptedPolicy policy(cfg.policy);
  CollectStats stats;
  Dataset ds = collect_dataset(cfg.collect_episodes, cfg.task_templates(), policy, cfg.expert_temperature,
                               cfg.collect_seed, &stats);
  ds.provenance = {config_hash(cfg), cfg.collect_seed};
  save_dataset(ds, a.out);
  info(g) << "collected " << stats.episodes << " episodes (" << stats.successful_episodes << " successful), "
          << stats.transitions << " transitions -> " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  bool no_dagger = false;
  std::optional<std::string> log_csv;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const ExperimentConfig cfg = base_config(g);
  revalidate(cfg);
  const Dataset ds = load_dataset(a.dataset);
  const EpisodeSplit split = split_heldout(episodes_from(ds));
  if (split.train.empty()) throw std::runtime_error("dataset has no successful training episodes");
  info(g) << "training on " << split.train.size() << " episodes (" << split.heldout.size() << " held out)\n";

  DynamicsModel model(cfg.dynamics, cfg.train.seed);
  std::vector<EpochLog> logs;
  const EpochCallback on_epoch = [&](const EpochLog& e) {
    logs.push_back(e);
    info(g) << "epoch " << e.epoch << " l_train " << e.horizon << " loss " << e.mean_loss << " l1 " << e.mean_l1
            << std::endl;
  };
  train_phase1(model, split.train, cfg.train, on_epoch);
  if (!a.no_dagger) train_phase2_dagger(model, split.train, cfg.train, on_epoch);

  save_weights(model, a.out, {config_hash(cfg), cfg.train.seed});
  info(g) << "weights -> " << a.out << '\n';
  if (a.log_csv) {
    write_file(*a.log_csv, [&](std::ostream& out) {
      out << provenance_comment({config_hash(cfg), cfg.train.seed}) << '\n';
      out << "epoch,l_train,loss,l1\n";
      for (const auto& e : logs) out << e.epoch << ',' << e.horizon << ',' << e.mean_loss << ',' << e.mean_l1 << '\n';
    });
  }
  return 0;
}

struct EvalArgs {
  std::string weights;
  std::string dataset;
  std::string horizons = "1,2,5,10";
  bool all_episodes = false;
  std::string out;
};

int cmd_eval_model(const Globals& g, const EvalArgs& a) {
  const ExperimentConfig cfg = base_config(g);
  revalidate(cfg);
  const std::vector<int> horizons = parse_int_list(a.horizons, "--horizons");
  for (int h : horizons) {
    if (h < 1) throw UsageError("horizons must be >= 1");
  }
  Provenance wprov;
  const DynamicsModel model = load_weights(a.weights, &wprov);
  const Dataset ds = load_dataset(a.dataset);
  auto episodes = episodes_from(ds);
  if (!a.all_episodes) episodes = split_heldout(std::move(episodes)).heldout;
  if (episodes.empty()) throw std::runtime_error("no episodes to evaluate");

  const auto rows = model_error_table(model, episodes, cfg.task_templates(), horizons);
  write_file(a.out, [&](std::ostream& out) { write_model_csv(out, rows, {config_hash(cfg), wprov.seed}); });
  for (const auto& r : rows) {
    info(g) << "h=" << r.horizon << " l1 " << r.l1 << " ofl " << r.ofl << " extract_err_px " << r.extract_err
            << '\n';
  }
  return 0;
}

struct RunArgs {
  std::optional<std::string> backend;
  std::optional<int> n;
  std::optional<int> l;
  std::optional<double> temperature;
  std::optional<int> episodes;
  std::optional<std::string> seeds;
  std::optional<int> workers;
  std::optional<std::string> weights;
  std::optional<std::string> grid;
  std::optional<std::string> log_plans;
  bool no_timing = false;
  std::string out;
};

int cmd_run(const Globals& g, const RunArgs& a) {
  ExperimentConfig cfg = base_config(g);
  if (a.backend) {
    try {
      cfg.planner.backend = backend_from_string(*a.backend);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (a.n) cfg.planner.num_candidates = *a.n;
  if (a.l) cfg.planner.rollout_length = *a.l;
  if (a.temperature) cfg.planner.temperature = *a.temperature;
  if (a.episodes) cfg.episodes = *a.episodes;
  if (a.workers) cfg.planner.workers = *a.workers;
  if (a.seeds) {
    cfg.seeds.clear();
    for (int s : parse_int_list(*a.seeds, "--seeds")) {
      if (s < 0) throw UsageError("seeds must be non-negative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }

  // --grid n=1,5,10 or l=2,5,10
  std::string knob;
  std::vector<int> values;
  if (a.grid) {
    const auto eq = a.grid->find('=');
    if (eq == std::string::npos) throw UsageError("--grid expects n=... or l=...");
    knob = a.grid->substr(0, eq);
    if (knob != "n" && knob != "l") throw UsageError("--grid knob must be n or l");
    values = parse_int_list(a.grid->substr(eq + 1), "--grid");
  }
  revalidate(cfg);

  std::unique_ptr<DynamicsModel> model;
  PlanResources resources;
  resources.reward = cfg.reward;
  if (cfg.planner.backend == Backend::dynamics) {
    if (!a.weights) throw UsageError("--weights is required for the dynamics backend");
    model = std::make_unique<DynamicsModel>(load_weights(*a.weights));
    resources.model = model.get();
  }

  const ScriptedPolicy policy(cfg.policy);
  const auto tasks = cfg.task_templates();
  std::unique_ptr<std::ofstream> plan_log;
  if (a.log_plans) {
    plan_log = std::make_unique<std::ofstream>(*a.log_plans, std::ios::binary | std::ios::trunc);
    if (!*plan_log) throw std::runtime_error("cannot write '" + *a.log_plans + "'");
  }

  std::vector<PlannerConfig> points;
  if (knob.empty()) {
    points.push_back(cfg.planner);
  } else {
    for (int v : values) {
      PlannerConfig p = cfg.planner;
      (knob == "n" ? p.num_candidates : p.rollout_length) = v;
      try {
        p.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      points.push_back(p);
    }
  }

  std::vector<SuccessRow> rows;
  for (const auto& p : points) {
    Rate success;
    for (std::uint64_t seed : cfg.seeds) {
      const auto results = benchmark_episodes(tasks, cfg.episodes, seed, policy, resources, p, plan_log.get());
      for (const auto& r : results) {
        SuccessRow row = to_row(r, p);
        if (a.no_timing) row.plan_time_ms = 0.0;
        rows.push_back(row);
        success.hits += r.success ? 1 : 0;
        ++success.total;
      }
    }
    info(g) << to_string(p.backend) << " n=" << p.num_candidates << " l=" << p.rollout_length
            << " T=" << p.temperature << " success " << success.hits << "/" << success.total << " = "
            << success.value() << std::endl;
  }
  write_file(a.out, [&](std::ostream& out) { write_success_csv(out, rows, {config_hash(cfg), cfg.seeds.front()}); });
  return 0;
}

struct BenchArgs {
  std::string ns = "1,5,10,15,20,25";
  std::string workers = "1";
  int steps = 10;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> weights;
  std::string out;
};

int cmd_bench_time(const Globals& g, const BenchArgs& a) {
  const ExperimentConfig cfg = base_config(g);
  revalidate(cfg);
  const auto ns = parse_int_list(a.ns, "--ns");
  const auto workers = parse_int_list(a.workers, "--workers");
  for (int v : ns) {
    if (v < 1) throw UsageError("--ns values must be >= 1");
  }
  for (int v : workers) {
    if (v < 1) throw UsageError("--workers values must be >= 1");
  }
  if (a.steps < 1) throw UsageError("--steps must be >= 1");

  std::unique_ptr<DynamicsModel> model;
  PlanResources resources;
  resources.reward = cfg.reward;
  if (cfg.planner.backend == Backend::dynamics) {
    if (!a.weights) throw UsageError("--weights is required for the dynamics backend");
    model = std::make_unique<DynamicsModel>(load_weights(*a.weights));
    resources.model = model.get();
  }
  const std::uint64_t seed = a.seed.value_or(cfg.seeds.front());
  const ScriptedPolicy policy(cfg.policy);
  const auto rows = timing_table(ns, workers, cfg.task_templates(), policy, resources, cfg.planner, a.steps, seed);
  write_file(a.out, [&](std::ostream& out) { write_timing_csv(out, rows, {config_hash(cfg), seed}); });
  for (const auto& r : rows) {
    info(g) << "n=" << r.n << " workers=" << r.workers << " median_ms " << r.median_ms << " p90_ms " << r.p90_ms
            << '\n';
  }
  return 0;
}

struct ReportArgs {
  std::string dir;
  std::optional<std::string> out;
};

int cmd_report(const Globals& g, const ReportArgs& a) {
  const auto summary = write_report(a.dir, a.out.value_or(a.dir));
  info(g) << "merged " << summary.success_rows << " success, " << summary.timing_rows << " timing, "
          << summary.model_rows << " model rows\n";
  for (const auto& p : summary.written) info(g) << "  " << p.string() << '\n';
  return 0;
}

int cmd_show_config(const Globals& g) {
  const ExperimentConfig cfg = base_config(g);
  std::cout << serialise_config(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Best-of-n rollout planning on a 2D tabletop world"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Sectioned key = value config file")->check(CLI::ExistingFile);
  app.add_flag("-q,--quiet", g.quiet, "Print nothing on stdout except requested output");

  CollectArgs ca;
  auto* collect = app.add_subcommand("collect", "Log expert transitions to a dataset file");
  collect->add_option("--episodes", ca.episodes, "Episodes to run");
  collect->add_option("--seed", ca.seed, "Root seed");
  collect->add_option("--temperature", ca.temperature, "Expert sampling temperature");
  collect->add_option("-o,--out", ca.out, "Dataset path")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit the dynamics model (teacher forcing, then multi-step adaptation)");
  train->add_option("--dataset", ta.dataset, "Dataset path")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", ta.out, "Weights path")->required();
  train->add_flag("--no-dagger", ta.no_dagger, "Skip the multi-step phase");
  train->add_option("--log-csv", ta.log_csv, "Per-epoch loss CSV");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval-model", "Held-out model error by horizon");
  eval->add_option("--weights", ea.weights, "Weights path")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", ea.dataset, "Dataset path")->required()->check(CLI::ExistingFile);
  eval->add_option("--horizons", ea.horizons, "Comma-separated horizons")->capture_default_str();
  eval->add_flag("--all-episodes", ea.all_episodes, "Evaluate every successful episode, not only the held-out split");
  eval->add_option("-o,--out", ea.out, "Model CSV path")->required();

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Planner benchmark");
  run->add_option("--backend", ra.backend, "env_sim or dynamics");
  run->add_option("--n", ra.n, "Candidates per planning step");
  run->add_option("--l", ra.l, "Rollout length");
  run->add_option("--temperature", ra.temperature, "Candidate first-action temperature");
  run->add_option("--episodes", ra.episodes, "Episodes per seed");
  run->add_option("--seeds", ra.seeds, "Comma-separated root seeds");
  run->add_option("--workers", ra.workers, "Rollout worker threads");
  run->add_option("--weights", ra.weights, "Weights for the dynamics backend")->check(CLI::ExistingFile);
  run->add_option("--grid", ra.grid, "Sweep one knob, e.g. n=1,5,10,15,20,25 or l=2,5,10,15");
  run->add_option("--log-plans", ra.log_plans, "JSON-lines log of every planning step");
  run->add_flag("--no-timing", ra.no_timing, "Write plan_time_ms as 0 so reruns are byte-identical");
  run->add_option("-o,--out", ra.out, "Success CSV path")->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-time", "Per-step planning time vs candidates");
  bench->add_option("--ns", ba.ns, "Comma-separated candidate counts")->capture_default_str();
  bench->add_option("--workers", ba.workers, "Comma-separated worker counts")->capture_default_str();
  bench->add_option("--steps", ba.steps, "Planning steps timed per point")->capture_default_str();
  bench->add_option("--seed", ba.seed, "Scene seed");
  bench->add_option("--weights", ba.weights, "Weights for the dynamics backend")->check(CLI::ExistingFile);
  bench->add_option("-o,--out", ba.out, "Timing CSV path")->required();

  ReportArgs pa;
  auto* report = app.add_subcommand("report", "Merge CSVs into a summary with SVG charts");
  report->add_option("dir", pa.dir, "Directory of CSVs")->required()->check(CLI::ExistingDirectory);
  report->add_option("-o,--out", pa.out, "Output directory (default: the input directory)");

  auto* show = app.add_subcommand("config", "Print the effective config in canonical form");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*collect) return cmd_collect(g, ca);
    if (*train) return cmd_train(g, ta);
    if (*eval) return cmd_eval_model(g, ea);
    if (*run) return cmd_run(g, ra);
    if (*bench) return cmd_bench_time(g, ba);
    if (*report) return cmd_report(g, pa);
    if (*show) return cmd_show_config(g);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
