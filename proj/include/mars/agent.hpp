#pragma once

// Actor-critic scheduling agent.
//
// The agent sees the first `slots` dependency-ready pending jobs (arrival
// order) as a zero-padded fixed-size vector and picks one visible job to
// start now, or "pass" to wait for the next event. Intermediate rewards are
// zero; the terminal reward is the negated average bounded slowdown.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mars/error.hpp"
#include "mars/job.hpp"
#include "mars/metrics.hpp"
#include "mars/neural.hpp"
#include "mars/simulator.hpp"

namespace mars {

inline constexpr int kFeaturesPerJob = 4;
inline constexpr int kClusterFeatures = 2;

struct Hyperparameters {
  double gamma = 1.0;
  double actor_lr = 3e-4;   // alpha^theta
  double critic_lr = 1e-3;  // alpha^w
  int slots = 32;
  std::vector<int> hidden = {64, 64};
  int epochs = 200;
  int workers = 1;
  double cost_weight = 0.0;
  bool ppo = false;
  double ppo_clip = 0.2;
  int ppo_epochs = 4;
  int ppo_minibatch = 64;
  Seconds horizon = 43200;  // normalizes waits and requested times
  Seconds tau = kDefaultTau;
  int validate_every = 50;
  int rollback_after = 3;
  std::uint64_t seed = 1;

  int state_dim() const { return slots * kFeaturesPerJob + kClusterFeatures; }
  int action_count() const { return slots + 1; }
  int pass_action() const { return slots; }
};

inline void validate(const Hyperparameters& h) {
  auto fail = [](const std::string& what) { throw ConfigError("agent: " + what); };
  if (!(h.gamma > 0 && h.gamma <= 1)) fail("gamma must be in (0, 1]");
  if (!(h.actor_lr > 0)) fail("actor step size must be > 0");
  if (!(h.critic_lr > 0)) fail("critic step size must be > 0");
  if (h.slots < 1) fail("slots must be >= 1");
  for (int w : h.hidden) {
    if (w < 1) fail("hidden layer widths must be >= 1");
  }
  if (h.epochs < 0) fail("epochs must be >= 0");
  if (h.workers < 1) fail("workers must be >= 1");
  if (!(h.cost_weight >= 0)) fail("cost weight must be >= 0");
  if (!(h.ppo_clip > 0)) fail("ppo clip must be > 0");
  if (h.ppo_epochs < 1 || h.ppo_minibatch < 1) fail("ppo epochs and minibatch must be >= 1");
  if (!(h.horizon > 0)) fail("horizon must be > 0");
  if (!(h.tau > 0)) fail("tau must be > 0");
  if (h.validate_every < 1) fail("validate_every must be >= 1");
  if (h.rollback_after < 1) fail("rollback_after must be >= 1");
}

// Actor, critic and their optimizer state.
struct AgentModel {
  Network actor;
  Network critic;
  AdamState actor_adam;
  AdamState critic_adam;
  int slots = 0;
  std::uint64_t epoch = 0;

  AgentModel() = default;
  explicit AgentModel(const Hyperparameters& h) : slots(h.slots) {
    std::vector<int> sizes{h.state_dim()};
    sizes.insert(sizes.end(), h.hidden.begin(), h.hidden.end());
    auto actor_sizes = sizes;
    actor_sizes.push_back(h.action_count());
    auto critic_sizes = sizes;
    critic_sizes.push_back(1);
    actor = Network(actor_sizes, Activation::kTanh, Activation::kIdentity, h.seed);
    critic = Network(critic_sizes, Activation::kTanh, Activation::kIdentity, h.seed + 1);
    actor_adam = AdamState(actor, {h.actor_lr});
    critic_adam = AdamState(critic, {h.critic_lr});
  }

  bool operator==(const AgentModel& o) const {
    return actor == o.actor && critic == o.critic && actor_adam == o.actor_adam &&
           critic_adam == o.critic_adam && slots == o.slots && epoch == o.epoch;
  }
};

// ---------------------------------------------------------------------------
// State encoding

// Per visible job: wait / horizon, requested time / horizon (both capped at
// 1), processors / P, cost_rate / (1 + cost_rate). Cluster: free / P and
// min(pending / slots, 1). Unoccupied slots stay zero.
inline Vector encode_state(std::span<const Job* const> queue, Seconds now, int free_procs,
                           int total_procs, const Hyperparameters& h) {
  Vector s = Vector::Zero(h.state_dim());
  const auto visible = std::min<std::size_t>(queue.size(), static_cast<std::size_t>(h.slots));
  for (std::size_t i = 0; i < visible; ++i) {
    const Job& j = *queue[i];
    const auto base = static_cast<Eigen::Index>(i * kFeaturesPerJob);
    s[base + 0] = std::min(std::max(0.0, now - j.submit_time) / h.horizon, 1.0);
    s[base + 1] = std::min(j.requested_time / h.horizon, 1.0);
    s[base + 2] = std::min(static_cast<double>(j.requested_procs) / total_procs, 1.0);
    s[base + 3] = j.cost_rate / (1.0 + j.cost_rate);
  }
  const auto cluster = static_cast<Eigen::Index>(h.slots * kFeaturesPerJob);
  s[cluster] = static_cast<double>(free_procs) / total_procs;
  s[cluster + 1] = std::min(static_cast<double>(queue.size()) / h.slots, 1.0);
  return s;
}

// ---------------------------------------------------------------------------
// Cost awareness

// Maps a job's estimated cost to a factor in (0, 1) through the survival
// function of a Gaussian fitted to the workload's costs: cheaper jobs get
// factors nearer 1.
struct CostModel {
  double mean = 0;
  double stddev = 0;

  static CostModel fit(std::span<const Job> jobs) {
    CostModel m;
    if (jobs.empty()) return m;
    for (const auto& j : jobs) m.mean += j.estimated_cost();
    m.mean /= static_cast<double>(jobs.size());
    for (const auto& j : jobs) m.stddev += std::pow(j.estimated_cost() - m.mean, 2);
    m.stddev = std::sqrt(m.stddev / static_cast<double>(jobs.size()));
    return m;
  }

  double factor(double cost) const {
    if (!(stddev > 0)) return 0.5;
    return 0.5 * std::erfc((cost - mean) / (stddev * std::sqrt(2.0)));
  }
};

// Neutral factor for the pass action (survival at the mean).
inline constexpr double kPassCostFactor = 0.5;

struct CostAdjustStats {
  std::size_t fallbacks = 0;
};

// probs * factors^weight, renormalized. Weight 0 returns the input
// unchanged; an all-zero product falls back to the input.
inline Vector apply_cost_adjustment(const Vector& probs, const Vector& factors, double weight,
                                    CostAdjustStats* stats = nullptr) {
  if (probs.size() != factors.size()) throw ContractError("cost factors do not match actions");
  if (weight == 0) return probs;
  Vector out(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    out[i] = probs[i] == 0 ? 0.0 : probs[i] * std::pow(factors[i], weight);
  }
  const double total = out.sum();
  if (!(total > 0) || !std::isfinite(total)) {
    if (stats) ++stats->fallbacks;
    return probs;
  }
  return out / total;
}

// ---------------------------------------------------------------------------
// Action selection

struct ActionMask {
  std::vector<std::uint8_t> valid;  // action_count entries, last = pass
};

// Masked, cost-adjusted policy distribution. The adjustment multiplies
// probabilities by factors^w, which is the same as adding w*ln(factor) to
// the logits; that form keeps gradients exact.
inline Vector policy_distribution(const Vector& logits, const ActionMask& mask, const Vector& factors,
                                  double cost_weight) {
  Vector z(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    z[i] = mask.valid[static_cast<std::size_t>(i)] ? logits[i]
                                                    : -std::numeric_limits<double>::infinity();
  }
  const Vector probs = softmax(z);
  return apply_cost_adjustment(probs, factors, cost_weight);
}

struct ActionChoice {
  int action = 0;
  double log_prob = 0;
  Vector probs;
};

template <typename Rng>
ActionChoice select_action(const Network& actor, const Vector& state, const ActionMask& mask,
                           const Vector& factors, double cost_weight, Rng& rng, bool greedy) {
  ActionChoice c;
  c.probs = policy_distribution(actor.forward(state), mask, factors, cost_weight);
  if (greedy) {
    Eigen::Index best = 0;
    c.probs.maxCoeff(&best);
    c.action = static_cast<int>(best);
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double target = u(rng);
    double acc = 0;
    c.action = -1;
    int last_valid = -1;
    for (Eigen::Index i = 0; i < c.probs.size(); ++i) {
      if (c.probs[i] <= 0) continue;
      last_valid = static_cast<int>(i);
      acc += c.probs[i];
      if (target < acc) {
        c.action = static_cast<int>(i);
        break;
      }
    }
    if (c.action < 0) c.action = last_valid;  // rounding at the top end
  }
  c.log_prob = std::log(c.probs[c.action]);
  return c;
}

// ---------------------------------------------------------------------------
// Trajectories and returns

struct TrajectoryStep {
  Vector state;
  ActionMask mask;
  Vector cost_factors;
  int action = 0;
  double reward = 0;
  double value = 0;  // critic estimate at collection time
  double log_prob = 0;
};

struct EpisodeTrajectory {
  std::vector<TrajectoryStep> steps;
  bool terminal = false;
  double terminal_reward = 0;
};

// Negated average bounded slowdown; equals -aggregate(...).bounded_slowdown.mean.
inline double episode_reward(std::span<const Job> finished, Seconds tau) {
  if (finished.empty()) throw ContractError("episode_reward: no finished jobs");
  return -aggregate(finished, tau, "").bounded_slowdown.mean;
}

struct Advantages {
  std::vector<double> advantage;
  std::vector<double> target;
};

// A_t = r_t + gamma * v(s_{t+1}) - v(s_t) with v(terminal) = 0, using the
// values recorded in the trajectory.
inline Advantages compute_advantages(const EpisodeTrajectory& traj, double gamma) {
  if (!traj.terminal) throw ContractError("compute_advantages: trajectory is not complete");
  Advantages out;
  const std::size_t n = traj.steps.size();
  out.advantage.resize(n);
  out.target.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? traj.steps[t + 1].value : 0.0;
    out.target[t] = traj.steps[t].reward + gamma * next;
    out.advantage[t] = out.target[t] - traj.steps[t].value;
  }
  return out;
}

// Visible slots the agent may start now. With backfilling on, the oldest
// ready job holds an EASY reservation and slots that would delay it are
// masked; otherwise every job that fits is startable.
inline std::vector<std::uint8_t> startable_slots(const Simulator& sim, std::span<const Job* const> queue,
                                                 std::size_t visible) {
  if (sim.options().backfill) {
    return sim.easy_startable(queue.first(visible));
  }
  std::vector<std::uint8_t> ok(visible);
  for (std::size_t i = 0; i < visible; ++i) ok[i] = queue[i]->requested_procs <= sim.free_procs();
  return ok;
}

// ---------------------------------------------------------------------------
// Scheduling policy backed by the actor

class AgentPolicy : public SchedulingPolicy {
 public:
  AgentPolicy(const AgentModel& model, const Hyperparameters& h, std::uint64_t seed, bool greedy,
              bool record)
      : model_(model), hyper_(h), rng_(seed), greedy_(greedy), record_(record) {
    if (model.slots != h.slots) throw ContractError("model was built for a different slot count");
  }

  std::string name() const override { return "rl"; }

  void on_episode_start(const Simulator& sim) override {
    trajectory_ = {};
    cost_ = CostModel::fit(sim.jobs());
  }

  std::optional<JobId> select(const Simulator& sim) override {
    const auto queue = sim.ready_queue();
    Vector state = encode_state(queue, sim.now(), sim.free_procs(), sim.total_procs(), hyper_);
    ActionMask mask;
    mask.valid.assign(static_cast<std::size_t>(hyper_.action_count()), 0);
    Vector factors = Vector::Constant(hyper_.action_count(), kPassCostFactor);
    bool any_fits = false;
    const auto visible = std::min<std::size_t>(queue.size(), static_cast<std::size_t>(hyper_.slots));
    const auto startable = startable_slots(sim, queue, visible);
    for (std::size_t i = 0; i < visible; ++i) {
      factors[static_cast<Eigen::Index>(i)] = cost_.factor(queue[i]->estimated_cost());
      if (startable[i]) {
        mask.valid[i] = 1;
        any_fits = true;
      }
    }
    // Passing with no future event would stall the simulation.
    mask.valid.back() = (sim.has_future_event() || !any_fits) ? 1 : 0;

    const auto choice =
        select_action(model_.actor, state, mask, factors, hyper_.cost_weight, rng_, greedy_);
    if (record_) {
      TrajectoryStep step;
      step.value = model_.critic.forward(state)[0];
      step.state = std::move(state);
      step.mask = std::move(mask);
      step.cost_factors = std::move(factors);
      step.action = choice.action;
      step.log_prob = choice.log_prob;
      trajectory_.steps.push_back(std::move(step));
    }
    if (choice.action == hyper_.pass_action()) return std::nullopt;
    return queue[static_cast<std::size_t>(choice.action)]->id;
  }

  void on_episode_end(const Simulator& sim) override {
    const double reward = episode_reward(sim.state().finished, hyper_.tau);
    trajectory_.terminal = true;
    trajectory_.terminal_reward = reward;
    if (!trajectory_.steps.empty()) trajectory_.steps.back().reward = reward;
  }

  const EpisodeTrajectory& trajectory() const { return trajectory_; }
  EpisodeTrajectory take_trajectory() { return std::move(trajectory_); }

 private:
  const AgentModel& model_;
  Hyperparameters hyper_;
  std::mt19937_64 rng_;
  bool greedy_;
  bool record_;
  CostModel cost_;
  EpisodeTrajectory trajectory_;
};

// Uniformly random valid action; the baseline for learning checks.
class RandomPolicy : public SchedulingPolicy {
 public:
  RandomPolicy(const Hyperparameters& h, std::uint64_t seed) : hyper_(h), rng_(seed) {}
  std::string name() const override { return "random"; }

  std::optional<JobId> select(const Simulator& sim) override {
    const auto queue = sim.ready_queue();
    std::vector<int> valid;
    const auto visible = std::min<std::size_t>(queue.size(), static_cast<std::size_t>(hyper_.slots));
    const auto startable = startable_slots(sim, queue, visible);
    for (std::size_t i = 0; i < visible; ++i) {
      if (startable[i]) valid.push_back(static_cast<int>(i));
    }
    if (sim.has_future_event() || valid.empty()) valid.push_back(hyper_.pass_action());
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    const int action = valid[pick(rng_)];
    if (action == hyper_.pass_action()) return std::nullopt;
    return queue[static_cast<std::size_t>(action)]->id;
  }

 private:
  Hyperparameters hyper_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Updates

// d ln pi(a) / d logits for the masked, cost-adjusted distribution.
inline Vector log_prob_gradient(const Vector& probs, int action) {
  Vector g = -probs;
  g[action] += 1.0;
  return g;
}

// d/d logits of sum_i pi_i * c_i with normalized costs c_i = 1 - factor_i.
inline Vector expected_cost_gradient(const Vector& probs, const Vector& factors) {
  const Vector cost = Vector::Ones(factors.size()) - factors;
  const double expected = probs.dot(cost);
  return probs.cwiseProduct(cost - Vector::Constant(cost.size(), expected));
}

// Loss gradients (for descent) of one step.
struct StepGradients {
  Gradients actor;
  Gradients critic;
  double delta = 0;
  double entropy = 0;
};

// Algorithm-1 step: delta = R + gamma v(S') - v(S) (v(terminal) = 0); the
// critic moves along I*delta*grad v, the actor along I*delta*grad ln pi(A|S)
// minus cost_weight * grad E[normalized cost]. Returned as descent
// gradients.
inline StepGradients actor_critic_step(const AgentModel& model, const EpisodeTrajectory& traj,
                                       std::size_t t, double discount_power,
                                       const Hyperparameters& h) {
  const auto& step = traj.steps[t];
  StepGradients out;

  ForwardCache critic_cache;
  const double v = model.critic.forward(step.state, &critic_cache)[0];
  const double v_next = t + 1 < traj.steps.size() ? model.critic.forward(traj.steps[t + 1].state)[0] : 0.0;
  out.delta = step.reward + h.gamma * v_next - v;

  const double scale = discount_power * out.delta;
  out.critic = model.critic.backward(critic_cache, Vector::Constant(1, -scale));

  ForwardCache actor_cache;
  const Vector logits = model.actor.forward(step.state, &actor_cache);
  const Vector probs = policy_distribution(logits, step.mask, step.cost_factors, h.cost_weight);
  Vector grad_logits = -scale * log_prob_gradient(probs, step.action);
  if (h.cost_weight > 0) {
    grad_logits += h.cost_weight * expected_cost_gradient(probs, step.cost_factors);
  }
  out.actor = model.actor.backward(actor_cache, grad_logits);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0) out.entropy -= probs[i] * std::log(probs[i]);
  }
  return out;
}

struct UpdateDiagnostics {
  double mean_delta = 0;
  double mean_entropy = 0;
  double actor_grad_norm = 0;
  double critic_grad_norm = 0;
  std::size_t steps = 0;
  bool aborted = false;
};

// Replays one or more on-policy trajectories in time order. At time step t
// the step gradients of every trajectory that reached t are averaged and
// applied with Adam; I is multiplied by gamma after each step. With one
// trajectory this is Algorithm 1 step by step. A non-finite TD error aborts
// the whole update and restores the previous parameters.
inline UpdateDiagnostics actor_critic_update(AgentModel& model,
                                             std::span<const EpisodeTrajectory> trajectories,
                                             const Hyperparameters& h) {
  UpdateDiagnostics diag;
  std::size_t longest = 0;
  for (const auto& traj : trajectories) {
    if (!traj.terminal) throw ContractError("actor_critic_update: incomplete trajectory");
    longest = std::max(longest, traj.steps.size());
  }
  const AgentModel backup = model;
  double discount = 1.0;
  for (std::size_t t = 0; t < longest; ++t) {
    std::optional<StepGradients> sum;
    int contributors = 0;
    for (const auto& traj : trajectories) {
      if (t >= traj.steps.size()) continue;
      auto g = actor_critic_step(model, traj, t, discount, h);
      if (!std::isfinite(g.delta)) {
        model = backup;
        diag.aborted = true;
        return diag;
      }
      diag.mean_delta += g.delta;
      diag.mean_entropy += g.entropy;
      ++diag.steps;
      if (!sum) {
        sum = std::move(g);
      } else {
        sum->actor += g.actor;
        sum->critic += g.critic;
      }
      ++contributors;
    }
    if (contributors > 1) {
      sum->actor *= 1.0 / contributors;
      sum->critic *= 1.0 / contributors;
    }
    diag.actor_grad_norm += std::sqrt(sum->actor.squared_norm());
    diag.critic_grad_norm += std::sqrt(sum->critic.squared_norm());
    try {
      adam_step(model.critic, sum->critic, model.critic_adam);
      adam_step(model.actor, sum->actor, model.actor_adam);
    } catch (const DivergenceError&) {
      model = backup;
      diag.aborted = true;
      return diag;
    }
    discount *= h.gamma;
  }
  if (diag.steps > 0) {
    diag.mean_delta /= static_cast<double>(diag.steps);
    diag.mean_entropy /= static_cast<double>(diag.steps);
  }
  if (longest > 0) {
    diag.actor_grad_norm /= static_cast<double>(longest);
    diag.critic_grad_norm /= static_cast<double>(longest);
  }
  return diag;
}

inline UpdateDiagnostics actor_critic_update(AgentModel& model, const EpisodeTrajectory& traj,
                                             const Hyperparameters& h) {
  return actor_critic_update(model, std::span<const EpisodeTrajectory>(&traj, 1), h);
}

// Clipped-surrogate alternative: advantages from the recorded values
// (normalized per update), ppo_epochs passes over minibatches of
// ppo_minibatch steps, critic regressed on the one-step targets.
inline UpdateDiagnostics ppo_update(AgentModel& model, std::span<const EpisodeTrajectory> trajectories,
                                    const Hyperparameters& h) {
  UpdateDiagnostics diag;
  struct Sample {
    const TrajectoryStep* step;
    double advantage;
    double target;
  };
  std::vector<Sample> samples;
  for (const auto& traj : trajectories) {
    const auto adv = compute_advantages(traj, h.gamma);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      samples.push_back({&traj.steps[t], adv.advantage[t], adv.target[t]});
      diag.mean_delta += adv.advantage[t];
    }
  }
  if (samples.empty()) return diag;
  diag.steps = samples.size();
  diag.mean_delta /= static_cast<double>(samples.size());
  double var = 0;
  for (const auto& s : samples) var += std::pow(s.advantage - diag.mean_delta, 2);
  const double sd = std::sqrt(var / static_cast<double>(samples.size())) + 1e-8;

  const AgentModel backup = model;
  std::size_t updates = 0;
  for (int epoch = 0; epoch < h.ppo_epochs; ++epoch) {
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(h.ppo_minibatch)) {
      const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(h.ppo_minibatch));
      Gradients ga = model.actor.zero_gradients();
      Gradients gc = model.critic.zero_gradients();
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[i];
        const double adv = (s.advantage - diag.mean_delta) / sd;
        ForwardCache ac;
        const Vector probs = policy_distribution(model.actor.forward(s.step->state, &ac), s.step->mask,
                                                 s.step->cost_factors, h.cost_weight);
        const double ratio = std::exp(std::log(probs[s.step->action]) - s.step->log_prob);
        const bool clipped = (adv > 0 && ratio > 1 + h.ppo_clip) || (adv < 0 && ratio < 1 - h.ppo_clip);
        Vector grad_logits = Vector::Zero(probs.size());
        if (!clipped) grad_logits = -adv * ratio * log_prob_gradient(probs, s.step->action);
        if (h.cost_weight > 0) grad_logits += h.cost_weight * expected_cost_gradient(probs, s.step->cost_factors);
        ga += model.actor.backward(ac, grad_logits);
        for (Eigen::Index k = 0; k < probs.size(); ++k) {
          if (probs[k] > 0) diag.mean_entropy -= probs[k] * std::log(probs[k]);
        }

        ForwardCache cc;
        const double v = model.critic.forward(s.step->state, &cc)[0];
        gc += model.critic.backward(cc, Vector::Constant(1, v - s.target));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ga *= inv;
      gc *= inv;
      diag.actor_grad_norm += std::sqrt(ga.squared_norm());
      diag.critic_grad_norm += std::sqrt(gc.squared_norm());
      try {
        adam_step(model.actor, ga, model.actor_adam);
        adam_step(model.critic, gc, model.critic_adam);
      } catch (const DivergenceError&) {
        model = backup;
        diag.aborted = true;
        return diag;
      }
      ++updates;
    }
  }
  diag.mean_entropy /= static_cast<double>(samples.size() * static_cast<std::size_t>(h.ppo_epochs));
  if (updates) {
    diag.actor_grad_norm /= static_cast<double>(updates);
    diag.critic_grad_norm /= static_cast<double>(updates);
  }
  return diag;
}

// Greedy evaluation of a model on a trace.
inline EpisodeResult evaluate_model(const AgentModel& model, const WorkloadTrace& trace,
                                    const Hyperparameters& h, const SimOptions& options) {
  AgentPolicy policy(model, h, h.seed, /*greedy=*/true, /*record=*/false);
  return run_episode(trace, policy, options);
}

}  // namespace mars
