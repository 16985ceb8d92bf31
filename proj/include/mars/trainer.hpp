#pragma once

// Training loop, model versioning with rollback, and model files.

#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mars/agent.hpp"
#include "mars/error.hpp"
#include "mars/neural.hpp"
#include "mars/simulator.hpp"

namespace mars {

inline constexpr const char* kModelFormat = "mars-model/1";

// ---------------------------------------------------------------------------
// Versions

struct ModelSnapshot {
  AgentModel model;
  double validation_reward = 0;
};

// history[0] is the current model G_m, history[1] is G_{m-1}, history[2]
// is G_{m-2}.
struct ModelVersions {
  std::vector<ModelSnapshot> history;
  int negative_streak = 0;
  std::size_t rollbacks = 0;

  static constexpr std::size_t kRetained = 3;

  bool empty() const { return history.empty(); }
  const ModelSnapshot& current() const { return history.at(0); }
};

// Rotates `candidate` in as G_m. A validation reward below G_{m-1}'s counts
// toward the negative streak; after `rollback_after` consecutive ones the
// candidate is discarded and G_{m-1} becomes current again. Returns true on
// rollback.
inline bool record_validation(ModelVersions& versions, AgentModel candidate, double reward,
                              int rollback_after) {
  const bool worse = !versions.history.empty() && reward < versions.history.front().validation_reward;
  versions.history.insert(versions.history.begin(), ModelSnapshot{std::move(candidate), reward});
  if (versions.history.size() > ModelVersions::kRetained) versions.history.resize(ModelVersions::kRetained);
  versions.negative_streak = worse ? versions.negative_streak + 1 : 0;
  if (versions.negative_streak >= rollback_after && versions.history.size() > 1) {
    versions.history.erase(versions.history.begin());
    versions.negative_streak = 0;
    ++versions.rollbacks;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Model files

inline nlohmann::json hyper_to_json(const Hyperparameters& h) {
  return {{"gamma", h.gamma},         {"actor_lr", h.actor_lr},   {"critic_lr", h.critic_lr},
          {"slots", h.slots},         {"hidden", h.hidden},       {"cost_weight", h.cost_weight},
          {"ppo", h.ppo},             {"horizon", h.horizon},     {"tau", h.tau}};
}

// Fields that fix the network shape and state encoding come from the model
// file; everything else keeps the caller's value.
inline Hyperparameters hyper_from_json(Hyperparameters base, const nlohmann::json& j) {
  if (j.contains("slots")) base.slots = j.at("slots").get<int>();
  if (j.contains("hidden")) base.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("horizon")) base.horizon = j.at("horizon").get<double>();
  return base;
}

inline nlohmann::json model_to_json(const AgentModel& m, const Hyperparameters& h,
                                    std::optional<double> validation_reward = std::nullopt) {
  nlohmann::json j = {{"format", kModelFormat},
                      {"slots", m.slots},
                      {"epoch", m.epoch},
                      {"hyper", hyper_to_json(h)},
                      {"actor", to_json(m.actor)},
                      {"critic", to_json(m.critic)},
                      {"actor_adam", to_json(m.actor_adam)},
                      {"critic_adam", to_json(m.critic_adam)}};
  if (validation_reward) j["validation_reward"] = *validation_reward;
  return j;
}

struct LoadedModel {
  AgentModel model;
  std::optional<double> validation_reward;
  nlohmann::json hyper;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
  const auto format = j.value("format", std::string{});
  if (format != kModelFormat) {
    throw ParseError("unsupported model format '" + format + "' (expected " + kModelFormat + ")");
  }
  LoadedModel out;
  out.model.slots = j.at("slots").get<int>();
  out.model.epoch = j.at("epoch").get<std::uint64_t>();
  out.model.actor = network_from_json(j.at("actor"));
  out.model.critic = network_from_json(j.at("critic"));
  out.model.actor_adam = adam_from_json(j.at("actor_adam"));
  out.model.critic_adam = adam_from_json(j.at("critic_adam"));
  if (j.contains("validation_reward")) out.validation_reward = j.at("validation_reward").get<double>();
  out.hyper = j.value("hyper", nlohmann::json::object());
  return out;
}

inline void save_model(const std::string& path, const AgentModel& m, const Hyperparameters& h,
                       std::optional<double> validation_reward = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path);
  out << model_to_json(m, h, validation_reward).dump() << "\n";
  if (!out) throw IoError("failed writing model file " + path);
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Training

struct CurvePoint {
  std::uint64_t epoch = 0;
  double mean_reward = 0;
  double entropy = 0;
  double mean_delta = 0;
  std::optional<double> validation_reward;
  bool rolled_back = false;
};

inline constexpr const char* kCurveSchema = "mars-curve/1";

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "# schema: " << kCurveSchema << "\n";
  out << "epoch,mean_reward,entropy,mean_delta,validation_reward,rolled_back\n";
  for (const auto& p : curve) {
    out << fmt::format("{},{},{},{},{},{}\n", p.epoch, p.mean_reward, p.entropy, p.mean_delta,
                       p.validation_reward ? fmt::format("{}", *p.validation_reward) : std::string{},
                       p.rolled_back ? 1 : 0);
  }
}

// Trace for worker `worker` in epoch `epoch`; each call feeds a fresh
// simulator.
using EnvFactory = std::function<WorkloadTrace(std::uint64_t epoch, int worker)>;

struct TrainOptions {
  SimOptions sim;
  std::optional<WorkloadTrace> validation;  // defaults to the epoch-0 training trace
  // Progress hook, called after each epoch with wall-clock seconds so far.
  std::function<void(const CurvePoint&, double)> on_epoch;
};

struct TrainResult {
  AgentModel model;  // last good parameters
  ModelVersions versions;
  std::vector<CurvePoint> curve;
  bool diverged = false;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Rollout {
  EpisodeTrajectory trajectory;
  double reward = 0;
};

inline Rollout collect_rollout(const AgentModel& snapshot, const WorkloadTrace& trace,
                               const Hyperparameters& h, const SimOptions& options,
                               std::uint64_t seed) {
  AgentPolicy policy(snapshot, h, seed, /*greedy=*/false, /*record=*/true);
  run_episode(trace, policy, options);
  Rollout r;
  r.trajectory = policy.take_trajectory();
  r.reward = r.trajectory.terminal_reward;
  return r;
}

// Synchronous advantage actor-critic training. Every epoch each of the
// `workers` rollout workers runs one episode on its own simulator with a
// read-only snapshot of the parameters; the trajectories are then combined
// into one update. Every `validate_every` epochs (and after the last one)
// the model is evaluated greedily and rotated into `versions`, rolling back
// after `rollback_after` consecutive validations worse than G_{m-1}.
inline TrainResult train(const EnvFactory& envs, const Hyperparameters& h, AgentModel model,
                         ModelVersions versions, const TrainOptions& options = {}) {
  validate(h);
  if (model.slots != h.slots) throw ConfigError("model slot count does not match hyperparameters");
  const auto started = std::chrono::steady_clock::now();
  const WorkloadTrace validation = options.validation ? *options.validation : envs(0, 0);

  TrainResult result;
  const std::uint64_t first_epoch = model.epoch;
  const std::uint64_t last_epoch = first_epoch + static_cast<std::uint64_t>(h.epochs);

  auto validate_now = [&](CurvePoint& point) {
    const double reward = -evaluate_model(model, validation, h, options.sim).report.bounded_slowdown.mean;
    point.validation_reward = reward;
    if (record_validation(versions, model, reward, h.rollback_after)) {
      const auto epoch = model.epoch;
      model = versions.current().model;
      model.epoch = epoch;
      point.rolled_back = true;
    }
  };

  for (std::uint64_t epoch = first_epoch; epoch < last_epoch; ++epoch) {
    const AgentModel snapshot = model;
    std::vector<Rollout> rollouts(static_cast<std::size_t>(h.workers));

    auto run_workers = [&]() {
      std::vector<std::exception_ptr> errors(rollouts.size());
      auto work = [&](std::size_t w) {
        try {
          const auto trace = envs(epoch, static_cast<int>(w));
          rollouts[w] = collect_rollout(snapshot, trace, h, options.sim, mix_seed(h.seed, epoch, w));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };
      if (rollouts.size() == 1) {
        work(0);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < rollouts.size(); ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
      }
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    };
    try {
      run_workers();
    } catch (const std::exception&) {
      run_workers();  // one retry, then the error propagates
    }

    std::vector<EpisodeTrajectory> trajectories;
    CurvePoint point;
    point.epoch = epoch + 1;
    for (auto& r : rollouts) {
      point.mean_reward += r.reward;
      trajectories.push_back(std::move(r.trajectory));
    }
    point.mean_reward /= static_cast<double>(rollouts.size());

    const auto diag = h.ppo ? ppo_update(model, trajectories, h) : actor_critic_update(model, trajectories, h);
    point.entropy = diag.mean_entropy;
    point.mean_delta = diag.mean_delta;
    if (diag.aborted || !model.actor.all_finite() || !model.critic.all_finite()) {
      model = snapshot;
      result.diverged = true;
      result.curve.push_back(point);
      break;
    }
    model.epoch = epoch + 1;

    if ((epoch + 1 - first_epoch) % static_cast<std::uint64_t>(h.validate_every) == 0 ||
        epoch + 1 == last_epoch) {
      validate_now(point);
    }
    result.curve.push_back(point);
    if (options.on_epoch) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      options.on_epoch(point, secs);
    }
  }
  result.model = std::move(model);
  result.versions = std::move(versions);
  return result;
}

// Convenience: the same trace for every worker and epoch.
inline EnvFactory fixed_trace_env(WorkloadTrace trace) {
  return [trace = std::move(trace)](std::uint64_t, int) { return trace; };
}

}  // namespace mars
