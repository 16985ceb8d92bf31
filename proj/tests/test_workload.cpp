#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <fmt/format.h>

#include "mars/swf.hpp"
#include "mars/workload.hpp"
#include "support.hpp"

using namespace mars;

namespace {

std::string swf_line(const std::vector<double>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ' ';
    out += fmt::format("{}", fields[i]);
  }
  return out;
}

}  // namespace

TEST(Swf, DecodesDataLineFields) {
  const auto r = parse_swf_text("1 0 0 100 4 -1 -1 4 120 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  ASSERT_EQ(r.trace.size(), 1u);
  const Job& j = r.trace.jobs[0];
  EXPECT_EQ(j.id, 1);
  EXPECT_EQ(j.submit_time, 0);
  EXPECT_EQ(j.run_time, 100);
  EXPECT_EQ(j.requested_procs, 4);
  EXPECT_EQ(j.requested_time, 120);
  EXPECT_FALSE(j.wait_time.has_value());
}

TEST(Swf, HeaderCommentsAreSkipped) {
  const auto r = parse_swf_text(
      "; Version: 2.2\n; MaxProcs: 128\n"
      "7 5 0 10 2 -1 -1 2 20 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  EXPECT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace.total_procs, 128);
  EXPECT_TRUE(r.errors.empty());
}

TEST(Swf, NegativeRuntimeIsDroppedAndCounted) {
  const auto r = parse_swf_text(
      "1 0 0 -1 4 -1 -1 4 120 -1 1 -1 -1 -1 -1 -1 -1 -1\n"
      "2 0 0 50 4 -1 -1 4 120 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  EXPECT_EQ(r.dropped, 1u);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace.jobs[0].id, 2);
}

TEST(Swf, FallsBackToRequestedProcsAndRuntime) {
  const auto r = parse_swf_text("3 1 0 40 -1 -1 -1 16 -1 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace.jobs[0].requested_procs, 16);
  EXPECT_EQ(r.trace.jobs[0].requested_time, 40);
}

TEST(Swf, MalformedLinesReportLineNumbers) {
  const auto r = parse_swf_text(
      "; header\n"
      "1 0 0 10 1 -1 -1 1 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n"
      "garbage here\n"
      "2 0 0 10\n");
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].line, 3u);
  EXPECT_EQ(r.errors[1].line, 4u);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(Swf, NoValidJobIsHardError) {
  EXPECT_THROW(parse_swf_text("; only a header\n"), ParseError);
  EXPECT_THROW(parse_swf_text("1 0 0 -1 4 -1 -1 4 120 -1 1 -1 -1 -1 -1 -1 -1 -1\n"), ParseError);
}

TEST(Swf, SortsBySubmitTime) {
  const auto r = parse_swf_text(
      "1 50 0 10 1 -1 -1 1 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n"
      "2 10 0 10 1 -1 -1 1 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  EXPECT_EQ(r.trace.jobs[0].id, 2);
  EXPECT_EQ(r.trace.jobs[1].id, 1);
}

TEST(Swf, JobsWiderThanMachineAreDropped) {
  const auto r = parse_swf_text(
      "; MaxProcs: 8\n"
      "1 0 0 10 16 -1 -1 16 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n"
      "2 0 0 10 8 -1 -1 8 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n");
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(Swf, RoundTripPreservesJobFields) {
  SyntheticConfig cfg;
  cfg.job_count = 200;
  cfg.seed = 11;
  auto trace = generate_synthetic(cfg);
  for (auto& j : trace.jobs) j.cost_rate = 0;  // SWF carries no cost
  const auto back = parse_swf_text(to_swf_text(trace)).trace;
  EXPECT_EQ(back.total_procs, trace.total_procs);
  EXPECT_EQ(back.jobs, trace.jobs);
}

// Fuzzed SWF lines: whatever survives parsing satisfies the job and trace
// invariants.
TEST(Swf, FuzzedLinesYieldValidTraces) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> field(-3, 200);
  std::uniform_int_distribution<int> coin(0, 9);
  for (int round = 0; round < 50; ++round) {
    std::ostringstream text;
    text << "; MaxProcs: 64\n";
    for (int line = 0; line < 40; ++line) {
      std::vector<double> f(18);
      for (auto& v : f) v = field(rng);
      f[0] = line + 1;
      if (coin(rng) == 0) f[4] = -1;
      if (coin(rng) == 0) f[8] = -1;
      if (coin(rng) == 0) f[1] = 0;
      text << swf_line(f) << "\n";
      if (coin(rng) == 0) text << "; comment\n";
    }
    try {
      const auto r = parse_swf_text(text.str());
      EXPECT_NO_THROW(validate_trace(r.trace));
    } catch (const ParseError&) {
      // every line filtered out
    }
  }
}

TEST(Synthetic, ZeroCountGivesEmptyTrace) {
  SyntheticConfig cfg;
  cfg.job_count = 0;
  EXPECT_TRUE(generate_synthetic(cfg).empty());
}

TEST(Synthetic, DeterministicForFixedSeed) {
  SyntheticConfig cfg;
  cfg.seed = 3;
  EXPECT_EQ(generate_synthetic(cfg).jobs, generate_synthetic(cfg).jobs);
  EXPECT_EQ(to_swf_text(generate_synthetic(cfg)), to_swf_text(generate_synthetic(cfg)));
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(generate_synthetic(cfg).jobs, generate_synthetic(other).jobs);
}

TEST(Synthetic, Count512Seed7IsSortedAndValid) {
  SyntheticConfig cfg;
  cfg.job_count = 512;
  cfg.seed = 7;
  const auto t = generate_synthetic(cfg);
  ASSERT_EQ(t.size(), 512u);
  EXPECT_NO_THROW(validate_trace(t));
  for (const auto& j : t.jobs) {
    EXPECT_GE(j.requested_time, j.run_time);
    EXPECT_LE(j.requested_time, std::ceil(j.run_time * cfg.overestimate_max));
    EXPECT_EQ(j.requested_procs & (j.requested_procs - 1), 0) << "power of two";
    EXPECT_LE(j.requested_procs, cfg.max_cores);
    EXPECT_GE(j.cost_rate, 0);
  }
}

TEST(Synthetic, InvalidBoundsAreConfigErrors) {
  SyntheticConfig cfg;
  cfg.runtime_min = 100;
  cfg.runtime_max = 10;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.arrival_rate = 0;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.max_cores = 512;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.overestimate_max = 0.5;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Synthetic, AssignCostsDependsOnlyOnSeed) {
  auto a = fixtures::random_trace(1, 50, 16);
  auto b = a;
  assign_costs(a, 2.0, 1.0, 9);
  assign_costs(b, 2.0, 1.0, 9);
  EXPECT_EQ(a.jobs, b.jobs);
  for (const auto& j : a.jobs) EXPECT_GE(j.cost_rate, 0);
  EXPECT_THROW(assign_costs(a, -1, 1, 1), ConfigError);
}

TEST(Slice, IdentitySliceOnlyRebases) {
  auto t = fixtures::random_trace(2, 30, 16);
  for (auto& j : t.jobs) j.submit_time += 100;
  const auto s = slice_trace(t, 0, t.size());
  ASSERT_EQ(s.size(), t.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto expect = t.jobs[i];
    expect.submit_time -= t.jobs[0].submit_time;
    EXPECT_EQ(s.jobs[i], expect);
  }
}

TEST(Slice, TwoThousandFromLargeTrace) {
  SyntheticConfig cfg = fixtures::sdsc_sp2_like_config();
  const auto t = generate_synthetic(cfg);
  ASSERT_EQ(t.size(), 73496u);
  const auto s = slice_trace(t, 1000, 2000);
  ASSERT_EQ(s.size(), 2000u);
  EXPECT_EQ(s.jobs.front().submit_time, 0);
  EXPECT_NO_THROW(validate_trace(s));
}

TEST(Slice, ShuffleIsDeterministic) {
  SyntheticConfig cfg;
  cfg.job_count = 300;
  const auto t = generate_synthetic(cfg);
  const auto a = slice_trace(t, 0, 20, 42, true);
  const auto b = slice_trace(t, 0, 20, 42, true);
  EXPECT_EQ(a.jobs, b.jobs);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_NE(slice_trace(t, 0, 20, 43, true).jobs, a.jobs);
  EXPECT_NO_THROW(validate_trace(a));
}

TEST(Slice, OutOfRangeIsBoundsError) {
  const auto t = fixtures::random_trace(4, 10, 8);
  EXPECT_THROW(slice_trace(t, 1, t.size()), BoundsError);
  EXPECT_THROW(slice_trace(t, t.size() + 1, 0), BoundsError);
  EXPECT_THROW(slice_trace(t, 0, t.size() + 1, 1, true), BoundsError);
}

TEST(Slice, DropsDependenciesOutsideSlice) {
  auto t = fixtures::make_trace({fixtures::make_job(1, 0, 10, 1), fixtures::make_job(2, 5, 10, 1),
                                fixtures::make_job(3, 9, 10, 1)},
                               4);
  t.jobs[2].dependencies = {1, 2};
  const auto s = slice_trace(t, 1, 2);
  EXPECT_EQ(s.jobs[1].dependencies, std::vector<JobId>{2});
}
