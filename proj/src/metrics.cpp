#include "rollplan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace rollplan {

namespace {

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (int i = 0; i < kNumPixels; ++i) s += std::abs(static_cast<double>(a.px[i]) - b.px[i]);
  return s / kNumPixels;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

const Task* task_for(const std::vector<Task>& tasks, std::uint32_t episode_id) {
  if (tasks.empty()) return nullptr;
  return &tasks[episode_id % tasks.size()];
}

}  // namespace

SuccessRates success_rates(std::span<const EpisodeResult> episodes) {
  if (episodes.empty()) throw std::invalid_argument("success_rates needs at least one episode");
  SuccessRates out;
  for (const auto& e : episodes) {
    out.success.hits += e.success ? 1 : 0;
    out.partial.hits += e.partial_success ? 1 : 0;
  }
  out.success.total = out.partial.total = static_cast<std::int64_t>(episodes.size());
  return out;
}

double rollout_error(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes, int horizon) {
  if (horizon < 1) throw std::invalid_argument("rollout_error horizon must be >= 1");
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& ep : episodes) {
    const int steps = static_cast<int>(ep.actions.size());
    for (int t = 0; t + horizon <= steps; ++t) {
      Image x = ep.frames[t];
      for (int k = 0; k < horizon; ++k) x = forward(model, x, ep.actions[t + k]);
      sum += mean_abs_diff(x, ep.frames[t + horizon]);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("no episode is long enough for horizon " + std::to_string(horizon));
  return sum / static_cast<double>(count);
}

double optical_flow_loss(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes) {
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      const Image& cur = ep.frames[t];
      const Image& next = ep.frames[t + 1];
      const Image pred = forward(model, cur, ep.actions[t]);
      double s = 0.0;
      for (int i = 0; i < kNumPixels; ++i) {
        const double dp = static_cast<double>(pred.px[i]) - cur.px[i];
        const double dt = static_cast<double>(next.px[i]) - cur.px[i];
        s += std::abs(dp - dt);
      }
      sum += s / kNumPixels;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("optical_flow_loss needs at least one transition");
  return sum / static_cast<double>(count);
}

ExtractionError extraction_error(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                 const std::vector<Task>& tasks, int horizon) {
  if (horizon < 1) throw std::invalid_argument("extraction_error horizon must be >= 1");
  ExtractionError out;
  double sum = 0.0;
  auto compare = [&](const std::optional<Vec2>& pred, const std::optional<Vec2>& truth) {
    if (!truth) return;
    if (!pred) {
      ++out.missing;
      return;
    }
    sum += distance(*pred, *truth) / kPixelPitch;
    ++out.compared;
  };
  for (const auto& ep : episodes) {
    std::vector<int> colors;
    if (const Task* task = task_for(tasks, ep.episode_id)) {
      for (const auto& o : task->objects) colors.push_back(o.color_id);
    } else {
      colors = {0, 1, 2};
    }
    const int steps = static_cast<int>(ep.actions.size());
    for (int t = 0; t + horizon <= steps; ++t) {
      Image x = ep.frames[t];
      for (int k = 0; k < horizon; ++k) x = forward(model, x, ep.actions[t + k]);
      const ExtractedState p = extract(x, colors);
      const ExtractedState g = extract(ep.frames[t + horizon], colors);
      compare(p.gripper_pos, g.gripper_pos);
      for (int c : colors) compare(p.object_positions[c], g.object_positions[c]);
    }
  }
  out.mean_px = out.compared == 0 ? 0.0 : sum / static_cast<double>(out.compared);
  return out;
}

std::vector<ModelErrorRow> model_error_table(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                             const std::vector<Task>& tasks, const std::vector<int>& horizons) {
  std::vector<ModelErrorRow> rows;
  const double ofl = optical_flow_loss(model, episodes);
  for (int h : horizons) {
    ModelErrorRow r;
    r.horizon = h;
    r.l1 = rollout_error(model, episodes, h);
    r.ofl = ofl;
    r.extract_err = extraction_error(model, episodes, tasks, h).mean_px;
    rows.push_back(r);
  }
  return rows;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

std::vector<TimingRow> timing_table(const std::vector<int>& ns, const std::vector<int>& workers,
                                    const std::vector<Task>& tasks, const Policy& policy,
                                    const PlanResources& resources, const PlannerConfig& base,
                                    int steps_per_point, std::uint64_t seed) {
  if (tasks.empty()) throw std::invalid_argument("timing_table needs at least one task");
  if (steps_per_point < 1) throw std::invalid_argument("timing_table needs at least one step per point");
  std::vector<TimingRow> rows;
  for (int w : workers) {
    for (int n : ns) {
      PlannerConfig cfg = base;
      cfg.num_candidates = n;
      cfg.workers = w;
      std::vector<double> times;
      for (int k = 0; k < steps_per_point; ++k) {
        const Task& task = tasks[static_cast<std::size_t>(k) % tasks.size()];
        const std::uint64_t env_seed = derive_seed({seed, static_cast<std::uint64_t>(k)});
        const WorldState state = reset(task, env_seed);
        const Image obs = render(state, &task);
        StepContext ctx{task, policy, resources, cfg, env_seed, 0};
        times.push_back(plan_step(obs, state, ctx).wall_time_ms);
      }
      rows.push_back({n, w, median(times), percentile(times, 0.9)});
    }
  }
  return rows;
}

std::uint64_t episode_seed(std::uint64_t root, int index) {
  return derive_seed({root, static_cast<std::uint64_t>(index)});
}

std::vector<EpisodeResult> benchmark_episodes(const std::vector<Task>& tasks, int episodes, std::uint64_t root_seed,
                                              const Policy& policy, const PlanResources& resources,
                                              PlannerConfig config, std::ostream* plan_log) {
  if (tasks.empty()) throw std::invalid_argument("benchmark needs at least one task");
  config.root_seed = root_seed;
  std::vector<EpisodeResult> out;
  out.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int i = 0; i < episodes; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i) % tasks.size()];
    out.push_back(run_episode(task, episode_seed(root_seed, i), policy, resources, config, plan_log));
  }
  return out;
}

std::vector<EpisodeResult> greedy_episodes(const std::vector<Task>& tasks, int episodes, std::uint64_t root_seed,
                                           const Policy& policy, int max_env_steps) {
  if (tasks.empty()) throw std::invalid_argument("benchmark needs at least one task");
  std::vector<EpisodeResult> out;
  for (int i = 0; i < episodes; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i) % tasks.size()];
    out.push_back(run_greedy_episode(task, episode_seed(root_seed, i), policy, max_env_steps));
  }
  return out;
}

SuccessRow to_row(const EpisodeResult& r, const PlannerConfig& cfg) {
  SuccessRow row;
  row.task = r.task;
  row.backend = cfg.backend;
  row.n = cfg.num_candidates;
  row.l = cfg.rollout_length;
  row.seed = r.seed;
  row.success = r.success;
  row.partial = r.partial_success;
  row.steps = r.env_steps_used;
  row.plan_time_ms = r.planning_time_ms;
  return row;
}

std::string provenance_comment(const Provenance& prov) {
  std::ostringstream os;
  os << "# config_hash=" << std::hex << std::setw(16) << std::setfill('0') << prov.config_hash << std::dec
     << " seed=" << prov.seed;
  return os.str();
}

void write_success_csv(std::ostream& out, std::span<const SuccessRow> rows, const Provenance& prov) {
  out << provenance_comment(prov) << '\n';
  out << "task,backend,n,l,seed,success,partial,steps,plan_time_ms\n";
  for (const auto& r : rows) {
    out << r.task << ',' << to_string(r.backend) << ',' << r.n << ',' << r.l << ',' << r.seed << ','
        << (r.success ? 1 : 0) << ',' << (r.partial ? 1 : 0) << ',' << r.steps << ',' << fmt(r.plan_time_ms)
        << '\n';
  }
}

void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows, const Provenance& prov) {
  out << provenance_comment(prov) << '\n';
  out << "n,workers,median_ms,p90_ms\n";
  for (const auto& r : rows) out << r.n << ',' << r.workers << ',' << fmt(r.median_ms) << ',' << fmt(r.p90_ms) << '\n';
}

void write_model_csv(std::ostream& out, std::span<const ModelErrorRow> rows, const Provenance& prov) {
  out << provenance_comment(prov) << '\n';
  out << "horizon,l1,ofl,extract_err\n";
  for (const auto& r : rows) {
    out << r.horizon << ',' << fmt(r.l1) << ',' << fmt(r.ofl) << ',' << fmt(r.extract_err) << '\n';
  }
}

BenchmarkReport summarise(std::span<const SuccessRow> rows) {
  BenchmarkReport rep;
  for (const auto& r : rows) {
    auto& t = rep.success_by_task[r.task];
    t.hits += r.success ? 1 : 0;
    ++t.total;
    rep.overall_success.hits += r.success ? 1 : 0;
    rep.overall_partial.hits += r.partial ? 1 : 0;
    ++rep.overall_success.total;
    ++rep.overall_partial.total;
    if (std::find(rep.seeds.begin(), rep.seeds.end(), r.seed) == rep.seeds.end()) rep.seeds.push_back(r.seed);
  }
  return rep;
}

}  // namespace rollplan
