#pragma once

// Shared fixtures for the test suites.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>
#include <string>

#include "mars/swf.hpp"
#include "mars/workload.hpp"

namespace mars::fixtures {

inline Job make_job(JobId id, Seconds submit, Seconds run, int procs, Seconds requested = 0) {
  Job j;
  j.id = id;
  j.submit_time = submit;
  j.run_time = run;
  j.requested_time = requested > 0 ? requested : run;
  j.requested_procs = procs;
  return j;
}

inline WorkloadTrace make_trace(std::vector<Job> jobs, int procs) {
  WorkloadTrace t;
  t.jobs = std::move(jobs);
  sort_by_submit(t.jobs);
  t.total_procs = procs;
  t.name = "test";
  return t;
}

// Small random trace. With `exact_estimates` the requested time equals the
// run time; otherwise it over-estimates by up to 3x.
inline WorkloadTrace random_trace(std::uint64_t seed, std::size_t max_jobs, int procs,
                                  bool exact_estimates = false) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(1, max_jobs);
  std::uniform_int_distribution<int> width(1, procs);
  std::uniform_int_distribution<int> runtime(1, 500);
  std::uniform_int_distribution<int> gap(0, 60);
  std::uniform_real_distribution<double> over(1.0, 3.0);
  const std::size_t n = count(rng);
  std::vector<Job> jobs;
  Seconds clock = 0;
  for (std::size_t i = 0; i < n; ++i) {
    clock += gap(rng);
    const Seconds run = runtime(rng);
    const Seconds req = exact_estimates ? run : std::ceil(run * over(rng));
    jobs.push_back(make_job(static_cast<JobId>(i + 1), clock, run, width(rng), req));
  }
  return make_trace(std::move(jobs), procs);
}

// Workload with the published shape of the SDSC IBM-SP2 log: 128
// processors, 73,496 jobs, power-of-two widths and heavy offered load.
inline SyntheticConfig sdsc_sp2_like_config() {
  SyntheticConfig c;
  c.name = "sdsc-sp2-like";
  c.job_count = 73496;
  c.total_procs = 128;
  c.max_cores = 128;
  c.runtime_min = 30;
  c.runtime_max = 64800;
  c.arrival_rate = 1.0 / 1180.0;
  c.overestimate_max = 5.0;
  c.seed = 1998;
  return c;
}

// The real log when MARS_SDSC_SP2_SWF points at it, otherwise the stand-in.
inline WorkloadTrace sdsc_sp2_trace() {
  if (const char* path = std::getenv("MARS_SDSC_SP2_SWF"); path && *path) {
    std::ifstream in(path);
    if (in) {
      auto parsed = parse_swf(in, "SDSC-SP2");
      assign_costs(parsed.trace, 1.0, 0.5, 1998);
      return parsed.trace;
    }
  }
  return generate_synthetic(sdsc_sp2_like_config());
}

}  // namespace mars::fixtures
