#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "mars/error.hpp"
#include "mars/job.hpp"

namespace mars {

// Parameters of the synthetic workload generator. Inter-arrival times are
// exponential, run times log-uniform, processor counts are powers of two with
// weight 1/(k+1) for 2^k, and costs a Gaussian truncated at zero.
struct SyntheticConfig {
  std::size_t job_count = 512;
  double arrival_rate = 1.0 / 600.0;  // jobs per second
  double runtime_min = 30;
  double runtime_max = 36000;
  int max_cores = 64;
  int total_procs = 256;
  double overestimate_max = 5.0;  // r_t = T_r * U[1, overestimate_max]
  double cost_mean = 1.0;
  double cost_stddev = 0.5;
  std::uint64_t seed = 1;
  std::string name = "synthetic";
};

inline void validate(const SyntheticConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic: " + what); };
  if (!(cfg.arrival_rate > 0) || !std::isfinite(cfg.arrival_rate)) fail("arrival_rate must be > 0");
  if (!(cfg.runtime_min > 0)) fail("runtime_min must be > 0");
  if (!(cfg.runtime_max >= cfg.runtime_min) || !std::isfinite(cfg.runtime_max))
    fail("runtime_max must be >= runtime_min");
  if (cfg.total_procs < 1) fail("total_procs must be >= 1");
  if (cfg.max_cores < 1 || cfg.max_cores > cfg.total_procs)
    fail("max_cores must be in [1, total_procs]");
  if (!(cfg.overestimate_max >= 1)) fail("overestimate_max must be >= 1");
  if (!(cfg.cost_mean >= 0)) fail("cost_mean must be >= 0");
  if (!(cfg.cost_stddev >= 0)) fail("cost_stddev must be >= 0");
}

namespace detail {

// Gaussian truncated at zero by rejection; falls back to 0 when the mass
// above zero is negligible.
template <typename Rng>
double truncated_gaussian(Rng& rng, double mean, double stddev) {
  if (stddev == 0) return std::max(0.0, mean);
  std::normal_distribution<double> dist(mean, stddev);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double x = dist(rng);
    if (x >= 0) return x;
  }
  return 0.0;
}

}  // namespace detail

inline WorkloadTrace generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::exponential_distribution<double> gap(cfg.arrival_rate);
  std::uniform_real_distribution<double> log_runtime(std::log(cfg.runtime_min),
                                                     std::log(cfg.runtime_max));
  std::uniform_real_distribution<double> over(1.0, cfg.overestimate_max);

  std::vector<double> core_weights;
  for (int k = 0; (1 << k) <= cfg.max_cores; ++k) core_weights.push_back(1.0 / (k + 1));
  std::discrete_distribution<int> core_exp(core_weights.begin(), core_weights.end());

  WorkloadTrace trace;
  trace.name = cfg.name;
  trace.total_procs = cfg.total_procs;
  trace.jobs.reserve(cfg.job_count);
  double clock = 0;
  for (std::size_t i = 0; i < cfg.job_count; ++i) {
    if (i > 0) clock += gap(rng);
    Job job;
    job.id = static_cast<JobId>(i + 1);
    job.submit_time = std::floor(clock);
    job.run_time = std::max(1.0, std::round(std::exp(log_runtime(rng))));
    job.requested_time = std::ceil(job.run_time * over(rng));
    job.requested_procs = 1 << core_exp(rng);
    job.cost_rate = detail::truncated_gaussian(rng, cfg.cost_mean, cfg.cost_stddev);
    trace.jobs.push_back(std::move(job));
  }
  return trace;
}

// Draws a cost rate for every job (SWF carries none). Depends only on the
// seed and job order.
inline void assign_costs(WorkloadTrace& trace, double mean, double stddev, std::uint64_t seed) {
  if (!(mean >= 0) || !(stddev >= 0)) throw ConfigError("cost distribution must be nonnegative");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& job : trace.jobs) job.cost_rate = detail::truncated_gaussian(rng, mean, stddev);
}

// Takes `count` jobs either contiguously from `start_index` or, with
// `shuffle`, a seeded random sample of the whole trace. Submit times are
// re-based so the first selected job arrives at 0. Dependencies on jobs
// outside the slice are dropped.
inline WorkloadTrace slice_trace(const WorkloadTrace& trace, std::size_t start_index,
                                 std::size_t count, std::uint64_t seed = 0,
                                 bool shuffle = false) {
  WorkloadTrace out;
  out.total_procs = trace.total_procs;
  out.name = trace.name;
  if (shuffle) {
    if (count > trace.jobs.size()) {
      throw BoundsError("cannot sample " + std::to_string(count) + " of " +
                        std::to_string(trace.jobs.size()) + " jobs");
    }
    std::vector<std::size_t> index(trace.jobs.size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `count` entries are the sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
      std::swap(index[i], index[pick(rng)]);
    }
    index.resize(count);
    std::sort(index.begin(), index.end());
    for (auto i : index) out.jobs.push_back(trace.jobs[i]);
  } else {
    if (start_index > trace.jobs.size() || count > trace.jobs.size() - start_index) {
      throw BoundsError("slice [" + std::to_string(start_index) + ", " +
                        std::to_string(start_index + count) + ") exceeds " +
                        std::to_string(trace.jobs.size()) + " jobs");
    }
    out.jobs.assign(trace.jobs.begin() + static_cast<std::ptrdiff_t>(start_index),
                    trace.jobs.begin() + static_cast<std::ptrdiff_t>(start_index + count));
  }
  if (out.jobs.empty()) return out;

  const Seconds base = out.jobs.front().submit_time;
  std::unordered_set<JobId> present;
  for (const auto& job : out.jobs) present.insert(job.id);
  for (auto& job : out.jobs) {
    job.submit_time -= base;
    std::erase_if(job.dependencies, [&](JobId dep) { return !present.contains(dep); });
  }
  return out;
}

}  // namespace mars
