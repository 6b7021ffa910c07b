#include "rollplan/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rollplan {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("bad value for '" + key + "': '" + raw + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + raw + "' (use true/false)");
}

template <typename T>
std::string num(T v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, std::string>) {
      out += values[i];
    } else {
      out += num(values[i]);
    }
  }
  return out;
}

/// One config key: how to read it into the struct and how to print it.
struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

using Section = std::vector<std::pair<std::string, Field>>;

#define NUM_FIELD(name, expr, type)                                                                        \
  {                                                                                                        \
    name, Field {                                                                                          \
      [](ExperimentConfig& c, const std::string& v) { c.expr = parse_number<type>(name, v); },             \
          [](const ExperimentConfig& c) { return num(c.expr); }                                             \
    }                                                                                                      \
  }

const std::vector<std::pair<std::string, Section>>& schema() {
  static const std::vector<std::pair<std::string, Section>> s = {
      {"policy",
       {
           NUM_FIELD("gain", policy.gain, double),
           NUM_FIELD("noise_std_at_temp_1", policy.noise_std_at_temp_1, double),
           NUM_FIELD("approach_bias", policy.approach_bias, double),
           NUM_FIELD("grip_trigger_distance", policy.grip_trigger_distance, double),
           NUM_FIELD("release_trigger_distance", policy.release_trigger_distance, double),
       }},
      {"dynamics",
       {
           NUM_FIELD("patch_size", dynamics.patch_size, int),
           NUM_FIELD("token_dim", dynamics.token_dim, int),
           NUM_FIELD("num_mix_blocks", dynamics.num_mix_blocks, int),
           NUM_FIELD("channel_hidden", dynamics.channel_hidden, int),
           NUM_FIELD("action_embed_dim", dynamics.action_embed_dim, int),
           {"residual_output",
            Field{[](ExperimentConfig& c, const std::string& v) {
                    c.dynamics.residual_output = parse_bool("residual_output", v);
                  },
                  [](const ExperimentConfig& c) { return std::string(c.dynamics.residual_output ? "true" : "false"); }}},
       }},
      {"train",
       {
           NUM_FIELD("batch_size", train.batch_size, int),
           NUM_FIELD("learning_rate", train.learning_rate, double),
           NUM_FIELD("adam_beta1", train.adam_beta1, double),
           NUM_FIELD("adam_beta2", train.adam_beta2, double),
           NUM_FIELD("adam_eps", train.adam_eps, double),
           NUM_FIELD("lambda_gdl", train.lambda_gdl, double),
           NUM_FIELD("phase1_epochs", train.phase1_epochs, int),
           NUM_FIELD("phase2_epochs", train.phase2_epochs, int),
           {"l_train_schedule",
            Field{[](ExperimentConfig& c, const std::string& v) {
                    c.train.l_train_schedule.clear();
                    for (const auto& item : split_list(v)) {
                      c.train.l_train_schedule.push_back(parse_number<int>("l_train_schedule", item));
                    }
                  },
                  [](const ExperimentConfig& c) { return join(c.train.l_train_schedule); }}},
           NUM_FIELD("seed", train.seed, std::uint64_t),
       }},
      {"reward",
       {
           NUM_FIELD("w_gap", reward.w_gap, double),
           NUM_FIELD("w_dest", reward.w_dest, double),
           NUM_FIELD("grasp_bonus", reward.grasp_bonus, double),
           NUM_FIELD("success_bonus", reward.success_bonus, double),
           NUM_FIELD("min_confidence", reward.min_confidence, double),
       }},
      {"planner",
       {
           NUM_FIELD("num_candidates", planner.num_candidates, int),
           NUM_FIELD("rollout_length", planner.rollout_length, int),
           NUM_FIELD("temperature", planner.temperature, double),
           {"backend", Field{[](ExperimentConfig& c, const std::string& v) {
                               try {
                                 c.planner.backend = backend_from_string(trim(v));
                               } catch (const std::invalid_argument& e) {
                                 throw ConfigError(e.what());
                               }
                             },
                             [](const ExperimentConfig& c) { return to_string(c.planner.backend); }}},
           {"resample_after_first",
            Field{[](ExperimentConfig& c, const std::string& v) {
                    c.planner.resample_after_first = parse_bool("resample_after_first", v);
                  },
                  [](const ExperimentConfig& c) {
                    return std::string(c.planner.resample_after_first ? "true" : "false");
                  }}},
           NUM_FIELD("max_env_steps", planner.max_env_steps, int),
           NUM_FIELD("workers", planner.workers, int),
           NUM_FIELD("execute_horizon", planner.execute_horizon, int),
       }},
      {"experiment",
       {
           {"tasks", Field{[](ExperimentConfig& c, const std::string& v) { c.tasks = split_list(v); },
                           [](const ExperimentConfig& c) { return join(c.tasks); }}},
           NUM_FIELD("episodes", episodes, int),
           {"seeds", Field{[](ExperimentConfig& c, const std::string& v) {
                             c.seeds.clear();
                             for (const auto& item : split_list(v)) {
                               c.seeds.push_back(parse_number<std::uint64_t>("seeds", item));
                             }
                           },
                           [](const ExperimentConfig& c) { return join(c.seeds); }}},
           NUM_FIELD("collect_episodes", collect_episodes, int),
           NUM_FIELD("expert_temperature", expert_temperature, double),
           NUM_FIELD("collect_seed", collect_seed, std::uint64_t),
           {"output_dir", Field{[](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); },
                                [](const ExperimentConfig& c) { return c.output_dir; }}},
       }},
  };
  return s;
}

#undef NUM_FIELD

}  // namespace

void ExperimentConfig::validate() const {
  try {
    policy.validate();
    dynamics.validate();
    train.validate();
    reward.validate();
    planner.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (tasks.empty()) throw ConfigError("at least one task is required");
  task_templates();
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (collect_episodes < 1) throw ConfigError("collect_episodes must be >= 1");
  if (expert_temperature < 0) throw ConfigError("expert_temperature must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::vector<Task> ExperimentConfig::task_templates() const {
  std::vector<Task> out;
  for (const auto& name : tasks) {
    try {
      out.push_back(task_by_name(name));
    } catch (const std::exception&) {
      throw ConfigError("unknown task '" + name + "'");
    }
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section_name, section] : tree) {
    const auto& sch = schema();
    auto sit = std::find_if(sch.begin(), sch.end(), [&](const auto& s) { return s.first == section_name; });
    if (sit == sch.end()) {
      if (section.empty()) throw ConfigError("key '" + section_name + "' outside any section");
      throw ConfigError("unknown section [" + section_name + "]");
    }
    for (const auto& [key, value] : section) {
      auto fit = std::find_if(sit->second.begin(), sit->second.end(), [&](const auto& f) { return f.first == key; });
      if (fit == sit->second.end()) throw ConfigError("unknown key '" + key + "' in [" + section_name + "]");
      fit->second.read(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialise_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [section_name, fields] : schema()) {
    if (!out.empty()) out += '\n';
    out += "[" + section_name + "]\n";
    for (const auto& [key, field] : fields) out += key + " = " + field.write(config) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(serialise_config(config)); }

}  // namespace rollplan
