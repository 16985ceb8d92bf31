#pragma once

// Workload-size routing between heuristics and the learned policy:
//   small workload with a compatible successor -> merge, schedule with RL
//   below MIN                                  -> SJF
//   below MEDIAN                               -> UNICEF
//   up to MAX                                  -> RL
//   above MAX                                  -> halve until <= MAX, RL each

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mars/dag.hpp"
#include "mars/error.hpp"
#include "mars/heuristics.hpp"
#include "mars/job.hpp"
#include "mars/metrics.hpp"
#include "mars/simulator.hpp"

namespace mars {

struct Thresholds {
  std::size_t min = 256;
  std::size_t median = 512;
  std::size_t max = 20000;
};

inline void validate(const Thresholds& t) {
  if (!(0 < t.min && t.min < t.median && t.median < t.max)) {
    throw ConfigError("thresholds must satisfy 0 < MIN < MEDIAN < MAX");
  }
}

enum class Branch { kEmpty, kCombine, kSjf, kUnicef, kRl, kSplit };

inline std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::kEmpty: return "empty";
    case Branch::kCombine: return "combine";
    case Branch::kSjf: return "sjf";
    case Branch::kUnicef: return "unicef";
    case Branch::kRl: return "rl";
    case Branch::kSplit: return "split";
  }
  return "?";
}

// Pure routing rule on sizes. `next_size` is absent when there is no
// following workload.
inline Branch decide_branch(std::size_t size, std::optional<std::size_t> next_size, bool compatible,
                            const Thresholds& t) {
  validate(t);
  if (size == 0) return Branch::kEmpty;
  if (size < t.median) {
    if (next_size && compatible && size + *next_size > t.median) return Branch::kCombine;
    return size < t.min ? Branch::kSjf : Branch::kUnicef;
  }
  return size <= t.max ? Branch::kRl : Branch::kSplit;
}

// Two workloads can share a model when their state vectors mean the same
// thing; the encoding normalizes widths by the system size.
inline bool compatible(const WorkloadTrace& a, const WorkloadTrace& b) {
  return a.total_procs == b.total_procs;
}

struct PlanChunk {
  WorkloadTrace trace;
  PolicyKind policy = PolicyKind::kRl;
  std::string provenance;
};

struct Plan {
  Branch branch = Branch::kEmpty;
  bool consumed_next = false;
  std::vector<PlanChunk> chunks;

  std::size_t job_count() const {
    std::size_t n = 0;
    for (const auto& c : chunks) n += c.trace.size();
    return n;
  }
};

namespace detail {

// Appends `next` to `current`, shifting the successor's ids past the
// current maximum so ids stay unique.
inline WorkloadTrace merge_workloads(const WorkloadTrace& current, const WorkloadTrace& next) {
  WorkloadTrace out = current;
  JobId offset = 0;
  for (const auto& j : current.jobs) offset = std::max(offset, j.id);
  for (Job j : next.jobs) {
    j.id += offset;
    for (auto& d : j.dependencies) d += offset;
    out.jobs.push_back(std::move(j));
  }
  sort_by_submit(out.jobs);
  out.name = current.name + "+" + next.name;
  return out;
}

}  // namespace detail

inline Plan decide(const WorkloadTrace& current, const WorkloadTrace* next, const Thresholds& t) {
  Plan plan;
  const bool compat = next && compatible(current, *next);
  plan.branch = decide_branch(current.size(), next ? std::optional(next->size()) : std::nullopt, compat, t);
  auto chunk_of = [&](WorkloadTrace trace, PolicyKind kind, std::string why) {
    plan.chunks.push_back({std::move(trace), kind, std::move(why)});
  };
  auto split_into_rl = [&](const WorkloadTrace& trace, const std::string& why) {
    if (trace.size() <= t.max) {
      chunk_of(trace, PolicyKind::kRl, why);
      return;
    }
    const auto parts = split_workload(trace.jobs, t.max);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      WorkloadTrace part;
      part.jobs = parts[i];
      part.total_procs = trace.total_procs;
      part.name = trace.name + "#" + std::to_string(i + 1);
      chunk_of(std::move(part), PolicyKind::kRl,
               fmt::format("{}split {}/{} of {} jobs", why.empty() ? "" : why + "; ", i + 1,
                           parts.size(), trace.size()));
    }
  };
  switch (plan.branch) {
    case Branch::kEmpty:
      break;
    case Branch::kCombine:
      plan.consumed_next = true;
      split_into_rl(detail::merge_workloads(current, *next),
                    fmt::format("combined {} + {} jobs", current.size(), next->size()));
      break;
    case Branch::kSjf:
      chunk_of(current, PolicyKind::kSjf, "below MIN");
      break;
    case Branch::kUnicef:
      chunk_of(current, PolicyKind::kUnicef, "below MEDIAN");
      break;
    case Branch::kRl:
      chunk_of(current, PolicyKind::kRl, "");
      break;
    case Branch::kSplit:
      split_into_rl(current, "");
      break;
  }
  return plan;
}

// Plans a sequence of workloads, letting each one absorb its successor when
// the combine rule fires.
inline std::vector<Plan> decide_all(const std::vector<WorkloadTrace>& workloads, const Thresholds& t) {
  std::vector<Plan> plans;
  for (std::size_t i = 0; i < workloads.size(); ++i) {
    const WorkloadTrace* next = i + 1 < workloads.size() ? &workloads[i + 1] : nullptr;
    plans.push_back(decide(workloads[i], next, t));
    if (plans.back().consumed_next) ++i;
  }
  return plans;
}

inline nlohmann::json plan_to_json(const Plan& plan) {
  nlohmann::json chunks = nlohmann::json::array();
  for (const auto& c : plan.chunks) {
    nlohmann::json chunk = {{"policy", policy_name(c.policy)},
                            {"jobs", c.trace.size()},
                            {"procs", c.trace.total_procs},
                            {"provenance", c.provenance}};
    if (!c.trace.empty()) {
      chunk["first_job"] = c.trace.jobs.front().id;
      chunk["last_job"] = c.trace.jobs.back().id;
    }
    chunks.push_back(std::move(chunk));
  }
  return {{"branch", branch_name(plan.branch)}, {"consumed_next", plan.consumed_next}, {"chunks", chunks}};
}

// Supplies the policy for RL chunks. Returning nullptr means no model is
// available.
using RlPolicyProvider = std::function<std::unique_ptr<SchedulingPolicy>(const WorkloadTrace& chunk)>;

struct PlanRunOptions {
  SimOptions sim;
  RlPolicyProvider rl;
  // Called with each heuristic chunk after it ran (background training).
  std::function<void(const WorkloadTrace&)> on_heuristic_chunk;
};

struct PlanResult {
  std::vector<EpisodeResult> chunks;
  MetricsReport aggregate;
};

inline PlanResult run_plan(const Plan& plan, const PlanRunOptions& options, std::string label = "mars") {
  PlanResult result;
  std::vector<Job> all;
  int procs = 0;
  for (const auto& chunk : plan.chunks) {
    EpisodeResult r;
    if (chunk.policy == PolicyKind::kRl) {
      if (!options.rl) throw ConfigError("plan has an RL chunk but no model is available");
      auto policy = options.rl(chunk.trace);
      if (!policy) throw ConfigError("plan has an RL chunk but no model is available");
      r = run_episode(chunk.trace, *policy, options.sim);
    } else {
      r = run_episode(chunk.trace, chunk.policy, options.sim);
      if (options.on_heuristic_chunk) options.on_heuristic_chunk(chunk.trace);
    }
    procs = std::max(procs, r.report.total_procs);
    all.insert(all.end(), r.finished.begin(), r.finished.end());
    result.chunks.push_back(std::move(r));
  }
  if (all.empty()) throw ContractError("run_plan: plan has no jobs");
  result.aggregate = aggregate(all, options.sim.tau, std::move(label), procs);
  return result;
}

}  // namespace mars
