#include "rollplan/planner.hpp"

#include <atomic>
#include <chrono>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <thread>

namespace rollplan {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::uint64_t candidate_stream(const StepContext& ctx, int candidate) {
  return derive_seed({ctx.config.root_seed, ctx.episode_seed, static_cast<std::uint64_t>(ctx.replan_index),
                      static_cast<std::uint64_t>(candidate)});
}

RolloutPlan simulate_env(const WorldState& start, const Action& first, int candidate,
                         const StepContext& ctx) {
  const auto& cfg = ctx.config;
  RolloutPlan plan;
  plan.candidate_index = candidate;
  WorldState sim = clone_env(start);
  Action action = first;
  for (int t = 0; t < cfg.rollout_length; ++t) {
    if (t > 0) {
      const Image obs = render(sim, &ctx.task);
      if (cfg.resample_after_first) {
        RngStream rng(derive_seed({candidate_stream(ctx, candidate), static_cast<std::uint64_t>(t)}));
        action = ctx.policy.propose({obs, ctx.task, cfg.temperature, &rng});
      } else {
        action = ctx.policy.propose({obs, ctx.task, 0.0, nullptr});
      }
    }
    plan.actions.push_back(action);
    sim = step(sim, action);
  }
  plan.reward = score(sim, ctx.task, ctx.resources.reward);
  plan.final_state = std::move(sim);
  return plan;
}

RolloutPlan simulate_model(const Image& observation, const Action& first, int candidate,
                           const StepContext& ctx) {
  const auto& cfg = ctx.config;
  if (!ctx.resources.model) throw std::invalid_argument("dynamics backend needs a model");
  std::optional<ResampleOptions> resample;
  if (cfg.resample_after_first) resample = ResampleOptions{cfg.temperature, candidate_stream(ctx, candidate)};
  auto steps = rollout(*ctx.resources.model, observation, ctx.policy, ctx.task, cfg.rollout_length, first,
                       resample);
  RolloutPlan plan;
  plan.candidate_index = candidate;
  for (auto& s : steps) {
    plan.actions.push_back(s.action);
    plan.predicted_frames.push_back(std::move(s.frame));
  }
  plan.reward = score(plan.predicted_frames.back(), ctx.task, ctx.resources.reward);
  return plan;
}

}  // namespace

std::string to_string(Backend b) { return b == Backend::env_sim ? "env_sim" : "dynamics"; }

Backend backend_from_string(const std::string& s) {
  if (s == "env_sim") return Backend::env_sim;
  if (s == "dynamics") return Backend::dynamics;
  throw std::invalid_argument("unknown backend '" + s + "' (expected env_sim or dynamics)");
}

void PlannerConfig::validate() const {
  if (num_candidates < 1) throw std::invalid_argument("num_candidates must be >= 1");
  if (rollout_length < 1) throw std::invalid_argument("rollout_length must be >= 1");
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (max_env_steps < 1) throw std::invalid_argument("max_env_steps must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (execute_horizon < 0) throw std::invalid_argument("execute_horizon must be >= 0");
}

BatchResult parallel_execute(const std::vector<RolloutJob>& jobs, int workers) {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  BatchResult out;
  out.plans.resize(jobs.size());
  if (jobs.empty()) return out;

  const auto batch_start = Clock::now();
  auto run_one = [&](std::size_t i) {
    const auto start = Clock::now();
    try {
      out.plans[i] = jobs[i]();
    } catch (const std::exception& e) {
      out.plans[i] = RolloutPlan{};
      out.plans[i].failed = true;
      out.plans[i].error = e.what();
    } catch (...) {
      out.plans[i] = RolloutPlan{};
      out.plans[i].failed = true;
      out.plans[i].error = "unknown failure";
    }
    out.plans[i].candidate_index = static_cast<int>(i);
    if (out.plans[i].failed) out.plans[i].reward = kRewardSentinel;
    out.plans[i].wall_time_ms = elapsed_ms(start);
  };

  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), jobs.size());
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) run_one(i);
      });
    }
  }
  out.wall_time_ms = elapsed_ms(batch_start);
  return out;
}

PlanStepResult plan_step(const Image& observation, const WorldState& state, const StepContext& ctx,
                         const std::vector<Action>* forced_first_actions) {
  const auto& cfg = ctx.config;
  cfg.validate();
  const int n = forced_first_actions ? static_cast<int>(forced_first_actions->size()) : cfg.num_candidates;
  if (n < 1) throw std::invalid_argument("plan_step needs at least one candidate");

  std::vector<Action> firsts;
  firsts.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (forced_first_actions) {
      firsts.push_back((*forced_first_actions)[i]);
    } else {
      RngStream rng(derive_seed({candidate_stream(ctx, i), 0}));
      firsts.push_back(ctx.policy.propose({observation, ctx.task, cfg.temperature, &rng}));
    }
  }

  std::vector<RolloutJob> jobs;
  jobs.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (cfg.backend == Backend::env_sim) {
      jobs.emplace_back([&, i] { return simulate_env(state, firsts[i], i, ctx); });
    } else {
      jobs.emplace_back([&, i] { return simulate_model(observation, firsts[i], i, ctx); });
    }
  }
  BatchResult batch = parallel_execute(jobs, cfg.workers);

  PlanStepResult result;
  std::vector<double> rewards;
  rewards.reserve(n);
  for (const auto& p : batch.plans) rewards.push_back(p.reward);
  result.selected = rank(rewards);
  result.plans = std::move(batch.plans);
  result.wall_time_ms = batch.wall_time_ms;
  return result;
}

EpisodeResult run_episode(const Task& task, std::uint64_t env_seed, const Policy& policy,
                          const PlanResources& resources, const PlannerConfig& config,
                          std::ostream* plan_log) {
  config.validate();
  Episode ep(task, env_seed);
  EpisodeResult res;
  res.task = task.name;
  res.seed = env_seed;

  int steps = 0;
  while (!ep.terminated() && steps < config.max_env_steps) {
    const Image obs = render(ep.state(), &task);
    StepContext ctx{task, policy, resources, config, env_seed, res.num_replans};
    const PlanStepResult ps = plan_step(obs, ep.state(), ctx);
    res.planning_time_ms += ps.wall_time_ms;
    res.selected_rewards.push_back(ps.best().reward);

    if (plan_log) {
      nlohmann::json rec;
      rec["task"] = task.name;
      rec["seed"] = env_seed;
      rec["replan"] = res.num_replans;
      rec["env_step"] = steps;
      std::vector<double> rewards, times;
      for (const auto& p : ps.plans) {
        rewards.push_back(p.reward);
        times.push_back(p.wall_time_ms);
      }
      rec["candidate_rewards"] = rewards;
      rec["selected"] = ps.selected;
      rec["candidate_wall_ms"] = times;
      rec["batch_wall_ms"] = ps.wall_time_ms;
      *plan_log << rec.dump() << '\n';
    }

    const auto& actions = ps.best().actions;
    const std::size_t horizon = config.execute_horizon > 0
                                    ? std::min<std::size_t>(config.execute_horizon, actions.size())
                                    : actions.size();
    for (std::size_t k = 0; k < horizon && !ep.terminated() && steps < config.max_env_steps; ++k) {
      ep.apply(actions[k]);
      ++steps;
    }
    ++res.num_replans;
  }

  res.success = ep.outcome().success;
  res.partial_success = ep.outcome().partial_success;
  res.env_steps_used = steps;
  return res;
}

EpisodeResult run_greedy_episode(const Task& task, std::uint64_t env_seed, const Policy& policy,
                                 int max_env_steps) {
  const StepOutcome out = greedy_rollout_baseline(env_seed, task, max_env_steps, policy);
  EpisodeResult res;
  res.task = task.name;
  res.seed = env_seed;
  res.success = out.success;
  res.partial_success = out.partial_success;
  res.env_steps_used = static_cast<int>(out.state.step_count);
  return res;
}

}  // namespace rollplan
