#pragma once

// Discrete-event simulation of a homogeneous cluster running rigid jobs.
// The clock jumps from event to event; at equal times completions are
// processed before arrivals and ties are broken by job id.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/heuristics.hpp"
#include "mars/job.hpp"
#include "mars/metrics.hpp"

namespace mars {

struct RunningJob {
  JobId id = 0;
  int procs = 0;
  Seconds start_time = 0;
  Seconds end_time = 0;        // actual
  Seconds estimated_end = 0;   // start + requested time

  bool operator==(const RunningJob&) const = default;
};

struct ClusterState {
  int total_procs = 0;
  int free_procs = 0;
  Seconds clock = 0;
  std::vector<RunningJob> running;
  std::vector<JobId> pending_queue;  // arrival order
  std::vector<Job> finished;         // completion order, wait_time set
  std::unordered_set<JobId> finished_ids;
};

inline ClusterState new_cluster(int total_procs) {
  if (total_procs < 1) throw ConfigError("cluster needs at least one processor");
  ClusterState state;
  state.total_procs = total_procs;
  state.free_procs = total_procs;
  return state;
}

enum class StartResult { kStarted, kNotPending, kInsufficientProcs, kUnmetDependency, kNotArrived };

// Starts `job` at `now` if processors and dependencies allow it. On success
// the job is removed from the pending queue, its wait time is set and it
// joins the running set; otherwise nothing changes.
inline StartResult start_job(ClusterState& state, Job& job, Seconds now) {
  auto it = std::find(state.pending_queue.begin(), state.pending_queue.end(), job.id);
  if (it == state.pending_queue.end() || job.status != JobStatus::kPending) {
    return StartResult::kNotPending;
  }
  if (now < job.submit_time) return StartResult::kNotArrived;
  for (JobId dep : job.dependencies) {
    if (!state.finished_ids.contains(dep)) return StartResult::kUnmetDependency;
  }
  if (job.requested_procs > state.free_procs) return StartResult::kInsufficientProcs;

  state.pending_queue.erase(it);
  state.free_procs -= job.requested_procs;
  job.wait_time = now - job.submit_time;
  job.status = JobStatus::kRunning;
  state.running.push_back(
      {job.id, job.requested_procs, now, now + job.run_time, now + job.requested_time});
  return StartResult::kStarted;
}

struct SimEvent {
  enum class Kind { kCompletion, kArrival };
  Seconds time = 0;
  Kind kind = Kind::kArrival;
  JobId job = 0;

  bool operator==(const SimEvent&) const = default;
};

struct SimOptions {
  int total_procs = 0;  // 0: use the trace's system size
  bool backfill = true;
  Seconds tau = kDefaultTau;
  // Called after every processed event and after every scheduling pass.
  std::function<void(const class Simulator&)> observer;
};

class Simulator;

// A scheduling policy drives one decision point at a time.
class SchedulingPolicy {
 public:
  virtual ~SchedulingPolicy() = default;
  virtual std::string name() const = 0;
  // Next job to start now, or nullopt to pass until the next event.
  virtual std::optional<JobId> select(const Simulator& sim) = 0;
  // Priority order of ready jobs for EASY backfilling; policies without an
  // order return nullopt and are never backfilled.
  virtual std::optional<std::vector<const Job*>> backfill_order(const Simulator&) {
    return std::nullopt;
  }
  virtual void on_episode_start(const Simulator&) {}
  virtual void on_episode_end(const Simulator&) {}
};

class Simulator {
 public:
  Simulator(const WorkloadTrace& trace, SimOptions options = {})
      : options_(std::move(options)),
        state_(new_cluster(options_.total_procs > 0 ? options_.total_procs : trace.total_procs)) {
    jobs_ = trace.jobs;
    std::stable_sort(jobs_.begin(), jobs_.end(), [](const Job& a, const Job& b) {
      if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
      return a.id < b.id;
    });
    for (std::size_t i = 0; i < jobs_.size(); ++i) {
      auto& job = jobs_[i];
      validate_job(job);
      job.status = JobStatus::kPending;
      job.wait_time.reset();
      if (!index_.emplace(job.id, i).second) {
        throw ContractError("duplicate job id " + std::to_string(job.id));
      }
    }
  }

  const ClusterState& state() const { return state_; }
  const SimOptions& options() const { return options_; }
  Seconds now() const { return state_.clock; }
  int total_procs() const { return state_.total_procs; }
  int free_procs() const { return state_.free_procs; }
  const std::vector<Job>& jobs() const { return jobs_; }
  const Job& job(JobId id) const { return jobs_.at(index_.at(id)); }
  std::optional<JobId> reservation() const { return reservation_; }
  // First job that ever received an EASY reservation (diagnostics/tests).
  std::optional<JobId> first_reserved() const { return first_reserved_; }

  bool done() const { return state_.finished.size() == jobs_.size(); }

  bool is_ready(const Job& job) const {
    return std::all_of(job.dependencies.begin(), job.dependencies.end(),
                       [&](JobId dep) { return state_.finished_ids.contains(dep); });
  }

  // Pending jobs whose dependencies have finished, in arrival order.
  std::vector<const Job*> ready_queue() const {
    std::vector<const Job*> out;
    out.reserve(state_.pending_queue.size());
    for (JobId id : state_.pending_queue) {
      const Job& j = job(id);
      if (is_ready(j)) out.push_back(&j);
    }
    return out;
  }

  bool has_future_event() const {
    return !completions_.empty() || next_arrival_ < jobs_.size();
  }

  std::optional<Seconds> next_event_time() const {
    std::optional<Seconds> t;
    if (!completions_.empty()) t = completions_.top().first;
    if (next_arrival_ < jobs_.size()) {
      const Seconds a = jobs_[next_arrival_].submit_time;
      t = t ? std::min(*t, a) : a;
    }
    return t;
  }

  StartResult start(JobId id) {
    auto it = index_.find(id);
    if (it == index_.end()) return StartResult::kNotPending;
    Job& j = jobs_[it->second];
    const auto result = start_job(state_, j, state_.clock);
    if (result == StartResult::kStarted) {
      completions_.push({j.end_time(), j.id});
      if (reservation_ == id) reservation_.reset();
    }
    return result;
  }

  // Moves the clock to the next event and applies it.
  SimEvent advance_to_next_event() {
    if (!has_future_event()) {
      throw DeadlockError(deadlock_message());
    }
    SimEvent ev;
    const bool completion_first =
        !completions_.empty() &&
        (next_arrival_ >= jobs_.size() ||
         completions_.top().first <= jobs_[next_arrival_].submit_time);
    if (completion_first) {
      const auto [time, id] = completions_.top();
      completions_.pop();
      state_.clock = time;
      auto run = std::find_if(state_.running.begin(), state_.running.end(),
                              [id](const RunningJob& r) { return r.id == id; });
      state_.free_procs += run->procs;
      state_.running.erase(run);
      Job& j = jobs_[index_.at(id)];
      j.status = JobStatus::kFinished;
      state_.finished.push_back(j);
      state_.finished_ids.insert(id);
      ev = {time, SimEvent::Kind::kCompletion, id};
    } else {
      Job& j = jobs_[next_arrival_++];
      state_.clock = j.submit_time;
      state_.pending_queue.push_back(j.id);
      ev = {j.submit_time, SimEvent::Kind::kArrival, j.id};
    }
    notify();
    return ev;
  }

  // Applies every event stamped with the next event time.
  void advance_through_instant() {
    const Seconds t = advance_to_next_event().time;
    while (auto next = next_event_time()) {
      if (*next != t) break;
      advance_to_next_event();
    }
  }

  // Which of `queue` may start now under EASY rules applied to that order:
  // the first job can never be delayed, so the others qualify only if they
  // fit and either finish by estimate before its shadow time or use
  // processors it will not need. When the first job fits, its shadow time
  // is now and only the spare processors are open to the others.
  std::vector<std::uint8_t> easy_startable(std::span<const Job* const> queue) const {
    std::vector<std::uint8_t> ok(queue.size(), 0);
    if (queue.empty()) return ok;
    const Job& head = *queue.front();
    const auto [shadow, extra] = shadow_time(head.requested_procs);
    ok[0] = head.requested_procs <= state_.free_procs;
    for (std::size_t i = 1; i < queue.size(); ++i) {
      const Job& cand = *queue[i];
      if (cand.requested_procs > state_.free_procs) continue;
      ok[i] = state_.clock + cand.requested_time <= shadow || cand.requested_procs <= extra;
    }
    return ok;
  }

  // Asks `selector` for jobs to start until it passes or no ready job fits.
  // Returns the number of jobs started.
  std::size_t schedule_cycle(const std::function<std::optional<JobId>(const Simulator&)>& selector) {
    std::size_t started = 0;
    while (any_ready_fits()) {
      const auto choice = selector(*this);
      if (!choice) break;
      auto it = index_.find(*choice);
      if (it == index_.end() || jobs_[it->second].status != JobStatus::kPending ||
          jobs_[it->second].submit_time > state_.clock || !is_ready(jobs_[it->second])) {
        throw ContractError("selector returned job " + std::to_string(*choice) +
                            " which is not a ready pending job");
      }
      if (start(*choice) != StartResult::kStarted) break;
      ++started;
    }
    notify();
    return started;
  }

  // EASY backfilling over `queue` (priority order, head first). Jobs are
  // started in order while they fit; the first blocked job gets a
  // reservation at the earliest time enough processors free up according to
  // the running jobs' requested times, and later jobs start now only if they
  // finish (by estimate) before that time or use processors the reservation
  // does not need. Returns the number of jobs started.
  std::size_t backfill_easy(std::vector<const Job*> queue) {
    std::size_t started = 0;
    std::size_t head = 0;
    while (head < queue.size() && queue[head]->requested_procs <= state_.free_procs) {
      if (start(queue[head]->id) == StartResult::kStarted) ++started;
      ++head;
    }
    if (head >= queue.size()) {
      reservation_.reset();
      notify();
      return started;
    }
    const Job& blocked = *queue[head];
    if (blocked.requested_procs > state_.total_procs) {
      throw DeadlockError(fmt::format("job {} needs {} processors, cluster has {}", blocked.id,
                                      blocked.requested_procs, state_.total_procs));
    }
    reservation_ = blocked.id;
    if (!first_reserved_) first_reserved_ = blocked.id;

    auto [shadow, extra] = shadow_time(blocked.requested_procs);
    for (std::size_t i = head + 1; i < queue.size() && state_.free_procs > 0; ++i) {
      const Job& cand = *queue[i];
      if (cand.requested_procs > state_.free_procs) continue;
      const bool ends_before = state_.clock + cand.requested_time <= shadow;
      const bool uses_spare = cand.requested_procs <= extra;
      if (!ends_before && !uses_spare) continue;
      if (start(cand.id) != StartResult::kStarted) continue;
      ++started;
      if (!ends_before) extra -= cand.requested_procs;
    }
    notify();
    return started;
  }

  // One decision point under `policy`.
  void decide(SchedulingPolicy& policy) {
    if (options_.backfill) {
      if (auto order = policy.backfill_order(*this)) {
        if (reservation_) {
          // The reserved job stays at the head until it starts.
          auto it = std::find_if(order->begin(), order->end(),
                                 [&](const Job* j) { return j->id == *reservation_; });
          if (it != order->end()) std::rotate(order->begin(), it, it + 1);
        }
        backfill_easy(std::move(*order));
        return;
      }
    }
    schedule_cycle([&](const Simulator& sim) { return policy.select(sim); });
  }

  // Throws if any structural invariant is broken.
  void check_invariants() const {
    int used = 0;
    for (const auto& r : state_.running) {
      used += r.procs;
      if (r.end_time < state_.clock) throw ContractError("running job ended in the past");
      const Job& j = job(r.id);
      if (r.start_time < j.submit_time) throw ContractError("job started before submission");
      for (JobId dep : j.dependencies) {
        if (!state_.finished_ids.contains(dep)) throw ContractError("dependency not finished");
        if (job(dep).end_time() > r.start_time) throw ContractError("started before dependency");
      }
    }
    if (state_.free_procs < 0 || state_.free_procs > state_.total_procs ||
        state_.free_procs + used != state_.total_procs) {
      throw ContractError("processor conservation violated");
    }
    std::unordered_set<JobId> seen;
    auto once = [&](JobId id) {
      if (!seen.insert(id).second) throw ContractError("job " + std::to_string(id) + " appears twice");
    };
    for (JobId id : state_.pending_queue) once(id);
    for (const auto& r : state_.running) once(r.id);
    for (const auto& f : state_.finished) once(f.id);
    for (std::size_t i = next_arrival_; i < jobs_.size(); ++i) once(jobs_[i].id);
    if (seen.size() != jobs_.size()) throw ContractError("job lost");
  }

 private:
  bool any_ready_fits() const {
    for (JobId id : state_.pending_queue) {
      const Job& j = job(id);
      if (j.requested_procs <= state_.free_procs && is_ready(j)) return true;
    }
    return false;
  }

  // Earliest time `procs` processors are free by estimate, and the spare
  // processors at that time.
  std::pair<Seconds, int> shadow_time(int procs) const {
    std::vector<std::pair<Seconds, int>> ends;
    ends.reserve(state_.running.size());
    for (const auto& r : state_.running) {
      ends.emplace_back(std::max(r.estimated_end, state_.clock), r.procs);
    }
    std::sort(ends.begin(), ends.end());
    int available = state_.free_procs;
    if (available >= procs) return {state_.clock, available - procs};
    for (const auto& [t, p] : ends) {
      available += p;
      if (available >= procs) return {t, available - procs};
    }
    return {std::numeric_limits<Seconds>::infinity(), 0};
  }

  std::string deadlock_message() const {
    for (JobId id : state_.pending_queue) {
      const Job& j = job(id);
      if (j.requested_procs > state_.total_procs) {
        return fmt::format("job {} needs {} processors, cluster has {}", id, j.requested_procs,
                           state_.total_procs);
      }
    }
    for (JobId id : state_.pending_queue) {
      if (!is_ready(job(id))) return fmt::format("job {} waits on a dependency that never finishes", id);
    }
    if (!state_.pending_queue.empty()) {
      return fmt::format("job {} is pending but no event remains", state_.pending_queue.front());
    }
    return "no future event";
  }

  void notify() const {
    if (options_.observer) options_.observer(*this);
  }

  using Completion = std::pair<Seconds, JobId>;
  SimOptions options_;
  ClusterState state_;
  std::vector<Job> jobs_;
  std::unordered_map<JobId, std::size_t> index_;
  std::size_t next_arrival_ = 0;
  std::priority_queue<Completion, std::vector<Completion>, std::greater<>> completions_;
  std::optional<JobId> reservation_;
  std::optional<JobId> first_reserved_;
};

// Closed-form priority policy.
class HeuristicPolicy : public SchedulingPolicy {
 public:
  explicit HeuristicPolicy(PolicyKind kind) : kind_(kind) {
    if (kind == PolicyKind::kRl) throw ContractError("HeuristicPolicy cannot run the RL policy");
  }
  std::string name() const override { return std::string(policy_name(kind_)); }
  PolicyKind kind() const { return kind_; }

  std::optional<JobId> select(const Simulator& sim) override {
    const auto queue = sim.ready_queue();
    return select_next(queue, sim.now(), kind_, sim.free_procs());
  }

  std::optional<std::vector<const Job*>> backfill_order(const Simulator& sim) override {
    return priority_order(sim.ready_queue(), sim.now(), kind_);
  }

 private:
  PolicyKind kind_;
};

struct EpisodeResult {
  std::vector<Job> finished;  // completion order
  MetricsReport report;
};

// Runs a whole trace to completion under `policy`.
inline EpisodeResult run_episode(const WorkloadTrace& trace, SchedulingPolicy& policy,
                                 const SimOptions& options = {}) {
  if (trace.empty()) throw ContractError("run_episode: empty trace");
  Simulator sim(trace, options);
  policy.on_episode_start(sim);
  while (!sim.done()) {
    if (!sim.has_future_event()) throw DeadlockError("simulation stalled with pending jobs");
    sim.advance_through_instant();
    sim.decide(policy);
  }
  policy.on_episode_end(sim);
  EpisodeResult result;
  result.finished = sim.state().finished;
  result.report = aggregate(result.finished, options.tau, policy.name(), sim.total_procs());
  return result;
}

inline EpisodeResult run_episode(const WorkloadTrace& trace, PolicyKind kind,
                                 const SimOptions& options = {}) {
  HeuristicPolicy policy(kind);
  return run_episode(trace, policy, options);
}

inline constexpr const char* kJobsSchema = "mars-jobs/1";

// Per-job records, one row per finished job in id order.
inline void write_jobs_csv(std::vector<Job> finished, const std::string& policy, std::ostream& out) {
  std::sort(finished.begin(), finished.end(), [](const Job& a, const Job& b) { return a.id < b.id; });
  out << "# schema: " << kJobsSchema << "\n";
  out << "id,submit,start,end,wait,procs,policy\n";
  for (const auto& j : finished) {
    out << fmt::format("{},{},{},{},{},{},{}\n", j.id, j.submit_time, j.start_time(), j.end_time(),
                       j.wait_time.value_or(0), j.requested_procs, policy);
  }
}

}  // namespace mars
