#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mars/error.hpp"

namespace mars {

using JobId = std::int64_t;
using Seconds = double;

enum class JobStatus { kPending, kRunning, kFinished };

// One rigid, non-preemptable job.
struct Job {
  JobId id = 0;
  Seconds submit_time = 0;
  std::optional<Seconds> wait_time;  // set by the simulator
  Seconds run_time = 0;              // actual
  Seconds requested_time = 0;        // user estimate
  int requested_procs = 1;
  double cost_rate = 0;  // currency per processor-second
  JobStatus status = JobStatus::kPending;
  std::vector<JobId> dependencies;

  Seconds start_time() const { return submit_time + wait_time.value_or(0); }
  Seconds end_time() const { return start_time() + run_time; }

  // Total cost if run to completion at the requested size and estimate.
  double estimated_cost() const {
    return cost_rate * requested_procs * requested_time;
  }

  bool operator==(const Job&) const = default;
};

inline void validate_job(const Job& job) {
  auto fail = [&](const char* what) {
    throw ContractError("job " + std::to_string(job.id) + ": " + what);
  };
  if (job.requested_procs < 1) fail("requested_procs must be >= 1");
  if (!(job.run_time > 0)) fail("run_time must be > 0");
  if (!(job.requested_time > 0)) fail("requested_time must be > 0");
  if (!(job.submit_time >= 0)) fail("submit_time must be >= 0");
  if (!(job.cost_rate >= 0)) fail("cost_rate must be >= 0");
  if (job.wait_time && !(*job.wait_time >= 0)) fail("wait_time must be >= 0");
}

struct WorkloadTrace {
  std::vector<Job> jobs;  // nondecreasing submit_time
  int total_procs = 1;
  std::string name;

  std::size_t size() const { return jobs.size(); }
  bool empty() const { return jobs.empty(); }
};

// Stable sort by submit time; ties keep input order.
inline void sort_by_submit(std::vector<Job>& jobs) {
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return a.submit_time < b.submit_time;
  });
}

inline void validate_trace(const WorkloadTrace& trace) {
  if (trace.total_procs < 1) throw ContractError("trace total_procs must be >= 1");
  for (std::size_t i = 0; i < trace.jobs.size(); ++i) {
    const Job& job = trace.jobs[i];
    validate_job(job);
    if (job.requested_procs > trace.total_procs) {
      throw ContractError("job " + std::to_string(job.id) + " requests " +
                          std::to_string(job.requested_procs) +
                          " processors, system has " +
                          std::to_string(trace.total_procs));
    }
    if (i > 0 && trace.jobs[i - 1].submit_time > job.submit_time) {
      throw ContractError("trace not sorted by submit time at job " +
                          std::to_string(job.id));
    }
  }
}

}  // namespace mars
