#pragma once

// Run configuration: an INI-style file with [run], [thresholds], [agent] and
// [synthetic] sections. Unknown sections or keys are rejected. Command-line
// flags are applied on top of the file by the CLI.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mars/agent.hpp"
#include "mars/decision.hpp"
#include "mars/error.hpp"
#include "mars/metrics.hpp"
#include "mars/workload.hpp"

namespace mars {

struct RunConfig {
  std::vector<std::string> traces;  // SWF paths, scheduled in order
  std::string workflow;              // workflow description path
  std::optional<SyntheticConfig> synthetic;
  std::string policy = "mars";
  std::vector<std::string> policies;
  std::string model;  // model file for RL/MARS
  std::uint64_t seed = 1;
  Seconds tau = kDefaultTau;
  int procs = 0;  // 0: trace's system size
  bool backfill = true;
  std::string out = "out";
  std::size_t slice_start = 0;
  std::size_t slice_count = 0;  // 0: whole trace
  bool slice_shuffle = false;
  double cost_mean = 1.0;
  double cost_stddev = 0.5;
  Thresholds thresholds;
  Hyperparameters hyper;
  bool train_on_demand = false;
  bool train_from_heuristic = false;
  bool explain = false;
};

inline void validate(const RunConfig& c) {
  validate(c.thresholds);
  validate(c.hyper);
  if (c.synthetic) validate(*c.synthetic);
  if (!(c.tau > 0)) throw ConfigError("tau must be > 0");
  if (c.procs < 0) throw ConfigError("procs must be >= 0");
  if (!(c.cost_mean >= 0) || !(c.cost_stddev >= 0)) throw ConfigError("cost distribution must be nonnegative");
}

namespace detail {

template <typename T>
T convert(const std::string& section, const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
    if (value == "off" || value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(section + "." + key + ": expected a boolean, got '" + value + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return value;
  } else {
    if (!(in >> out) || !(in >> std::ws).eof()) {
      throw ConfigError(section + "." + key + ": cannot parse '" + value + "'");
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (value.find('-') != std::string::npos) {
        throw ConfigError(section + "." + key + ": must be nonnegative");
      }
    }
    return out;
  }
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

// Applies one key. Shared by the file loader and the CLI override path.
inline void set_config_value(RunConfig& c, const std::string& section, const std::string& key,
                             const std::string& value) {
  using detail::convert;
  auto unknown = [&]() { throw ConfigError("unknown config key '" + section + "." + key + "'"); };
  if (section == "run") {
    if (key == "trace") c.traces = detail::split_list(value);
    else if (key == "workflow") c.workflow = value;
    else if (key == "policy") c.policy = value;
    else if (key == "policies") c.policies = detail::split_list(value);
    else if (key == "model") c.model = value;
    else if (key == "seed") c.seed = convert<std::uint64_t>(section, key, value);
    else if (key == "tau") c.tau = convert<double>(section, key, value);
    else if (key == "procs") c.procs = convert<int>(section, key, value);
    else if (key == "backfill") c.backfill = convert<bool>(section, key, value);
    else if (key == "out") c.out = value;
    else if (key == "slice_start") c.slice_start = convert<std::size_t>(section, key, value);
    else if (key == "slice_count") c.slice_count = convert<std::size_t>(section, key, value);
    else if (key == "slice_shuffle") c.slice_shuffle = convert<bool>(section, key, value);
    else if (key == "cost_mean") c.cost_mean = convert<double>(section, key, value);
    else if (key == "cost_stddev") c.cost_stddev = convert<double>(section, key, value);
    else if (key == "train_on_demand") c.train_on_demand = convert<bool>(section, key, value);
    else if (key == "train_from_heuristic") c.train_from_heuristic = convert<bool>(section, key, value);
    else if (key == "explain") c.explain = convert<bool>(section, key, value);
    else unknown();
  } else if (section == "thresholds") {
    if (key == "min") c.thresholds.min = convert<std::size_t>(section, key, value);
    else if (key == "median") c.thresholds.median = convert<std::size_t>(section, key, value);
    else if (key == "max") c.thresholds.max = convert<std::size_t>(section, key, value);
    else unknown();
  } else if (section == "agent") {
    auto& h = c.hyper;
    if (key == "gamma") h.gamma = convert<double>(section, key, value);
    else if (key == "actor_lr") h.actor_lr = convert<double>(section, key, value);
    else if (key == "critic_lr") h.critic_lr = convert<double>(section, key, value);
    else if (key == "slots") h.slots = convert<int>(section, key, value);
    else if (key == "hidden") {
      h.hidden.clear();
      for (const auto& w : detail::split_list(value)) h.hidden.push_back(convert<int>(section, key, w));
    }
    else if (key == "epochs") h.epochs = convert<int>(section, key, value);
    else if (key == "workers") h.workers = convert<int>(section, key, value);
    else if (key == "cost_weight") h.cost_weight = convert<double>(section, key, value);
    else if (key == "ppo") h.ppo = convert<bool>(section, key, value);
    else if (key == "ppo_clip") h.ppo_clip = convert<double>(section, key, value);
    else if (key == "ppo_epochs") h.ppo_epochs = convert<int>(section, key, value);
    else if (key == "ppo_minibatch") h.ppo_minibatch = convert<int>(section, key, value);
    else if (key == "horizon") h.horizon = convert<double>(section, key, value);
    else if (key == "validate_every") h.validate_every = convert<int>(section, key, value);
    else if (key == "rollback_after") h.rollback_after = convert<int>(section, key, value);
    else unknown();
  } else if (section == "synthetic") {
    if (!c.synthetic) c.synthetic = SyntheticConfig{};
    auto& s = *c.synthetic;
    if (key == "count") s.job_count = convert<std::size_t>(section, key, value);
    else if (key == "arrival_rate") s.arrival_rate = convert<double>(section, key, value);
    else if (key == "runtime_min") s.runtime_min = convert<double>(section, key, value);
    else if (key == "runtime_max") s.runtime_max = convert<double>(section, key, value);
    else if (key == "max_cores") s.max_cores = convert<int>(section, key, value);
    else if (key == "procs") s.total_procs = convert<int>(section, key, value);
    else if (key == "overestimate_max") s.overestimate_max = convert<double>(section, key, value);
    else if (key == "cost_mean") s.cost_mean = convert<double>(section, key, value);
    else if (key == "cost_stddev") s.cost_stddev = convert<double>(section, key, value);
    else if (key == "seed") s.seed = convert<std::uint64_t>(section, key, value);
    else if (key == "name") s.name = value;
    else unknown();
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
}

inline void apply_config_stream(RunConfig& c, std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' must be inside a section");
    }
    if (section == "synthetic" && !c.synthetic) c.synthetic = SyntheticConfig{};
    if (section != "run" && section != "thresholds" && section != "agent" && section != "synthetic") {
      throw ConfigError("unknown config section '" + section + "'");
    }
    for (const auto& [key, value] : body) set_config_value(c, section, key, value.data());
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  apply_config_stream(c, in);
}

}  // namespace mars
