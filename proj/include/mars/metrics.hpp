#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/job.hpp"

namespace mars {

// Bounded-slowdown threshold used throughout unless configured.
inline constexpr Seconds kDefaultTau = 10.0;

inline void check_times(Seconds wait, Seconds run) {
  if (!(run > 0)) throw ContractError("run time must be > 0");
  if (!(wait >= 0)) throw ContractError("wait time must be >= 0");
}

// (T_w + T_r) / T_r
inline double slowdown(Seconds wait, Seconds run) {
  check_times(wait, run);
  return (wait + run) / run;
}

// max{(T_w + T_r) / max{T_r, tau}, 1}
inline double bounded_slowdown(Seconds wait, Seconds run, Seconds tau) {
  check_times(wait, run);
  if (!(tau > 0)) throw ContractError("tau must be > 0");
  return std::max((wait + run) / std::max(run, tau), 1.0);
}

// max{(T_w + T_r) / (procs * max{T_r, tau}), 1}, procs = the job's width.
inline double pp_slowdown(Seconds wait, Seconds run, Seconds tau, int procs) {
  check_times(wait, run);
  if (!(tau > 0)) throw ContractError("tau must be > 0");
  if (procs < 1) throw ContractError("processor count must be >= 1");
  return std::max((wait + run) / (procs * std::max(run, tau)), 1.0);
}

struct Summary {
  double mean = 0;
  double median = 0;
  double p95 = 0;
};

// Median averages the two middle values; p95 is the nearest-rank percentile.
inline Summary summarize(std::vector<double> values) {
  Summary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  const std::size_t n = values.size();
  s.mean = sum / static_cast<double>(n);
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = values[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

struct JobMetrics {
  JobId id = 0;
  double slowdown = 1;
  double bounded_slowdown = 1;
  double pp_slowdown = 1;
};

struct MetricsReport {
  std::string policy;
  Seconds tau = kDefaultTau;
  int total_procs = 0;
  std::size_t job_count = 0;
  Seconds makespan = 0;
  std::vector<JobMetrics> per_job;
  Summary slowdown;
  Summary bounded_slowdown;
  Summary pp_slowdown;
};

// Summarizes finished jobs. Makespan runs from the first submission to the
// last completion. Sums are taken in id order so the result does not depend
// on the order of `jobs`.
inline MetricsReport aggregate(std::span<const Job> jobs, Seconds tau, std::string policy,
                               int total_procs = 0) {
  if (jobs.empty()) throw ContractError("aggregate: no finished jobs");
  MetricsReport r;
  r.policy = std::move(policy);
  r.tau = tau;
  r.total_procs = total_procs;
  r.job_count = jobs.size();

  std::vector<const Job*> ordered;
  ordered.reserve(jobs.size());
  for (const auto& job : jobs) ordered.push_back(&job);
  std::sort(ordered.begin(), ordered.end(), [](const Job* a, const Job* b) { return a->id < b->id; });

  Seconds first_submit = ordered.front()->submit_time;
  Seconds last_end = 0;
  std::vector<double> sd, bsd, pp;
  for (const Job* job : ordered) {
    if (!job->wait_time) throw ContractError("job " + std::to_string(job->id) + " has no wait time");
    const Seconds w = *job->wait_time;
    JobMetrics m{job->id, slowdown(w, job->run_time), bounded_slowdown(w, job->run_time, tau),
                 pp_slowdown(w, job->run_time, tau, job->requested_procs)};
    sd.push_back(m.slowdown);
    bsd.push_back(m.bounded_slowdown);
    pp.push_back(m.pp_slowdown);
    r.per_job.push_back(m);
    first_submit = std::min(first_submit, job->submit_time);
    last_end = std::max(last_end, job->end_time());
  }
  r.makespan = last_end - first_submit;
  r.slowdown = summarize(std::move(sd));
  r.bounded_slowdown = summarize(std::move(bsd));
  r.pp_slowdown = summarize(std::move(pp));
  return r;
}

inline constexpr const char* kReportSchema = "mars-report/1";

inline void write_report_csv_header(std::ostream& out) {
  out << "# schema: " << kReportSchema << "\n";
  out << "policy,jobs,tau,procs,makespan,"
         "mean_slowdown,median_slowdown,p95_slowdown,"
         "mean_bsld,median_bsld,p95_bsld,"
         "mean_pp_slowdown,median_pp_slowdown,p95_pp_slowdown\n";
}

inline void write_report_csv_row(const MetricsReport& r, std::ostream& out) {
  out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.policy, r.job_count, r.tau,
                     r.total_procs, r.makespan, r.slowdown.mean, r.slowdown.median,
                     r.slowdown.p95, r.bounded_slowdown.mean, r.bounded_slowdown.median,
                     r.bounded_slowdown.p95, r.pp_slowdown.mean, r.pp_slowdown.median,
                     r.pp_slowdown.p95);
}

}  // namespace mars
