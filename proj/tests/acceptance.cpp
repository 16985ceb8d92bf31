// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Runtime limits are part of each criterion.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <sys/wait.h>

#include "mars/mars.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mars;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_seconds > 0 && secs > limit_seconds) {
    o.pass = false;
    o.detail += fmt::format("; over the {:.0f}s limit", limit_seconds);
  }
  if (!o.pass) ++failures;
  std::cout << fmt::format("{} {} ({:.2f}s): {}\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail) << std::flush;
}

Outcome metric_oracle() {
  int bad = 0;
  for (const auto& c : oracles::metric_cases()) {
    if (slowdown(c.wait, c.run) != c.slowdown || bounded_slowdown(c.wait, c.run, c.tau) != c.bounded ||
        pp_slowdown(c.wait, c.run, c.tau, c.procs) != c.per_proc) {
      ++bad;
    }
  }
  const auto n = oracles::metric_cases().size();
  return {bad == 0 && n == 50, fmt::format("{}/{} closed-form cases exact", n - bad, n)};
}

Outcome selection_oracle() {
  int bad = 0, checks = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto q = oracles::random_queue(seed);
    std::vector<const Job*> ptrs;
    for (const auto& j : q.jobs) ptrs.push_back(&j);
    for (auto kind : kHeuristicPolicies) {
      ++checks;
      if (select_next(ptrs, q.now, kind, q.free_procs) != oracles::brute_force_select(q.jobs, q.now, kind, q.free_procs)) {
        ++bad;
      }
    }
  }
  return {bad == 0, fmt::format("{} mismatches in {} queue/policy pairs", bad, checks)};
}

Outcome conservation() {
  std::size_t events = 0;
  int incomplete = 0;
  Hyperparameters h;
  h.slots = 8;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto trace = fixtures::random_trace(seed + 10000, 200, 64);
    for (std::size_t i = 5; i < trace.jobs.size(); i += 11) trace.jobs[i].dependencies = {trace.jobs[i - 3].id};
    SimOptions o;
    o.backfill = seed % 2 == 0;
    o.observer = [&](const Simulator& sim) {
      sim.check_invariants();
      ++events;
    };
    for (auto kind : kHeuristicPolicies) {
      if (run_episode(trace, kind, o).finished.size() != trace.size()) ++incomplete;
    }
    RandomPolicy random(h, seed);
    if (run_episode(trace, random, o).finished.size() != trace.size()) ++incomplete;
  }
  return {incomplete == 0, fmt::format("invariants held at {} events; {} incomplete runs", events, incomplete)};
}

std::map<JobId, Seconds> starts(const EpisodeResult& r) {
  std::map<JobId, Seconds> out;
  for (const auto& j : r.finished) out[j.id] = j.start_time();
  return out;
}

Outcome easy_property() {
  int violations = 0, compared = 0;
  SimOptions off;
  off.backfill = false;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto trace = fixtures::random_trace(seed + 20000, 150, 32, /*exact_estimates=*/true);
    for (auto kind : {PolicyKind::kFcfs, PolicyKind::kSjf}) {
      HeuristicPolicy policy(kind);
      Simulator sim(trace, SimOptions{});
      while (!sim.done()) {
        sim.advance_through_instant();
        sim.decide(policy);
      }
      const auto head = sim.first_reserved();
      if (!head) continue;
      ++compared;
      if (sim.job(*head).start_time() > starts(run_episode(trace, kind, off)).at(*head)) ++violations;
    }
  }
  return {violations == 0 && compared > 0,
          fmt::format("{} violations over {} head jobs (FCFS and SJF)", violations, compared)};
}

Outcome gradient_check() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) worst = std::max(worst, oracles::random_network_gradient_error(seed));
  return {worst < 1e-4, fmt::format("max relative error {:.3g} over 20 networks", worst)};
}

Outcome softmax_validity() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> logit(0.0, 25.0);
  std::uniform_real_distribution<double> u(0.0, 1.0), weight(0.0, 10.0);
  double worst = 0;
  bool identity = true;
  for (int i = 0; i < 10000; ++i) {
    const int n = 2 + i % 40;
    Vector z(n), f(n);
    ActionMask mask;
    for (int k = 0; k < n; ++k) {
      z[k] = logit(rng);
      f[k] = u(rng);
      mask.valid.push_back(u(rng) < 0.7 || k == n - 1);
    }
    const Vector p = softmax(z);
    worst = std::max(worst, std::abs(p.sum() - 1.0));
    const Vector q = policy_distribution(z, mask, f, weight(rng));
    worst = std::max(worst, std::abs(q.sum() - 1.0));
    const Vector same = apply_cost_adjustment(p, f, 0.0);
    for (int k = 0; k < n; ++k) identity = identity && same[k] == p[k];
  }
  return {worst <= 1e-9 && identity,
          fmt::format("max |sum - 1| = {:.2g}; weight 0 identity {}", worst, identity ? "exact" : "broken")};
}

Outcome bandit() {
  const double p = oracles::bandit_better_action_probability(500, 3);
  return {p > 0.9, fmt::format("P(better action) = {:.4f} after 500 updates", p)};
}

Outcome learning_improvement() {
  SyntheticConfig cfg;
  cfg.job_count = 512;
  cfg.seed = 7;
  const auto trace = generate_synthetic(cfg);
  Hyperparameters h;
  h.seed = 7;
  h.epochs = 200;
  h.workers = 1;
  const SimOptions sim;

  double random_abs = 0;
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    RandomPolicy random(h, 1000 + ep);
    random_abs += run_episode(trace, random, sim).report.bounded_slowdown.mean;
  }
  random_abs /= 20;

  TrainOptions opts;
  opts.sim = sim;
  const auto result = train(fixed_trace_env(trace), h, AgentModel(h), {}, opts);
  if (result.diverged) return {false, "training diverged"};
  const double trained_abs = evaluate_model(result.model, trace, h, sim).report.bounded_slowdown.mean;
  const double gain = (random_abs - trained_abs) / random_abs;
  return {gain >= 0.10, fmt::format("greedy ABS {:.3f} vs random mean ABS {:.3f} ({:+.1f}%)", trained_abs,
                                    random_abs, 100 * gain)};
}

Outcome decision_policy() {
  const Thresholds t;
  std::set<Branch> seen;
  std::vector<std::string> problems;
  auto sized = [](std::size_t n, std::uint64_t seed) {
    SyntheticConfig c;
    c.job_count = n;
    c.seed = seed;
    return generate_synthetic(c);
  };
  auto partitions = [&](const Plan& p, const std::vector<Job>& input) {
    std::multiset<std::tuple<Seconds, Seconds, int>> a, b;
    for (const auto& j : input) a.emplace(j.submit_time, j.run_time, j.requested_procs);
    for (const auto& c : p.chunks) {
      if (c.trace.size() > t.max) return false;
      for (const auto& j : c.trace.jobs) b.emplace(j.submit_time, j.run_time, j.requested_procs);
    }
    return a == b;
  };
  const std::map<std::size_t, std::pair<Branch, std::size_t>> expected = {
      {100, {Branch::kSjf, 1}},     {300, {Branch::kUnicef, 1}}, {800, {Branch::kRl, 1}},
      {20001, {Branch::kSplit, 2}}, {50000, {Branch::kSplit, 4}}};
  for (const auto& [n, want] : expected) {
    const auto w = sized(n, n);
    const auto plan = decide(w, nullptr, t);
    seen.insert(plan.branch);
    if (plan.branch != want.first || plan.chunks.size() != want.second || !partitions(plan, w.jobs)) {
      problems.push_back(fmt::format("eta={} gave {} with {} chunks", n, branch_name(plan.branch), plan.chunks.size()));
    }
    for (const auto& c : plan.chunks) {
      const PolicyKind want_kind = want.first == Branch::kSjf      ? PolicyKind::kSjf
                                   : want.first == Branch::kUnicef ? PolicyKind::kUnicef
                                                                   : PolicyKind::kRl;
      if (c.policy != want_kind) problems.push_back(fmt::format("eta={} chunk policy {}", n, policy_name(c.policy)));
    }
  }
  const auto a = sized(400, 1), b = sized(400, 2);
  const auto combined = decide(a, &b, t);
  seen.insert(combined.branch);
  std::vector<Job> both = a.jobs;
  both.insert(both.end(), b.jobs.begin(), b.jobs.end());
  if (combined.branch != Branch::kCombine || combined.chunks.size() != 1 || combined.chunks[0].trace.size() != 800 ||
      !partitions(combined, both)) {
    problems.push_back("400+400 did not combine into one 800-job RL chunk");
  }
  // Totality: exactly one branch for every size up to 10 * MAX.
  for (std::size_t n = 0; n <= 10 * t.max; n += 7) {
    const Branch got = decide_branch(n, std::nullopt, false, t);
    const Branch want = n == 0 ? Branch::kEmpty
                        : n < t.min ? Branch::kSjf
                        : n < t.median ? Branch::kUnicef
                        : n <= t.max ? Branch::kRl
                                     : Branch::kSplit;
    if (got != want) {
      problems.push_back(fmt::format("size {} routed to {}", n, branch_name(got)));
      break;
    }
  }
  const bool all_five = seen.count(Branch::kCombine) && seen.count(Branch::kSjf) && seen.count(Branch::kUnicef) &&
                        seen.count(Branch::kRl) && seen.count(Branch::kSplit);
  return {problems.empty() && all_five,
          problems.empty() ? fmt::format("all five branches exercised; partitions exact; thresholds (256, 512, 20000)")
                           : problems.front()};
}

// The RL chunk's model is trained on demand on the window just before the
// evaluated slice, so the evaluated jobs are unseen.
Outcome mars_vs_fcfs() {
  const auto full = fixtures::sdsc_sp2_trace();
  std::mt19937_64 rng(2000);
  std::uniform_int_distribution<std::size_t> start(2000, full.size() - 2000);
  const std::size_t first = start(rng);
  const auto slice = slice_trace(full, first, 2000);
  const auto before = slice_trace(full, first - 2000, 2000);
  const SimOptions sim;

  const double fcfs = run_episode(slice, PolicyKind::kFcfs, sim).report.bounded_slowdown.mean;

  Hyperparameters h;
  h.seed = 2000;
  h.epochs = 20;
  h.validate_every = 5;
  TrainOptions opts;
  opts.sim = sim;
  const auto trained = train(fixed_trace_env(before), h, AgentModel(h), {}, opts);

  const auto plan = decide(slice, nullptr, Thresholds{});
  PlanRunOptions run;
  run.sim = sim;
  run.rl = [&](const WorkloadTrace&) -> std::unique_ptr<SchedulingPolicy> {
    return std::make_unique<AgentPolicy>(trained.model, h, h.seed, true, false);
  };
  const double mars = run_plan(plan, run).aggregate.bounded_slowdown.mean;
  return {mars <= fcfs, fmt::format("slice [{}, {}) of {}: mars ({}) mean bsld {:.3f} vs fcfs {:.3f}", first,
                                    first + 2000, full.name, branch_name(plan.branch), mars, fcfs)};
}

Outcome rollback() {
  Hyperparameters h;
  h.slots = 8;
  h.hidden = {16};
  auto model_with_seed = [&](std::uint64_t s) {
    auto copy = h;
    copy.seed = s;
    return AgentModel(copy);
  };
  ModelVersions v;
  record_validation(v, model_with_seed(1), -3.0, 3);
  record_validation(v, model_with_seed(2), -2.0, 3);
  bool early = false;
  early |= record_validation(v, model_with_seed(3), -2.5, 3);
  early |= record_validation(v, model_with_seed(4), -2.6, 3);
  const AgentModel previous = v.current().model;  // G_{m-1} at the third validation
  const auto previous_json = model_to_json(previous, h).dump();
  const bool rolled = record_validation(v, model_with_seed(5), -2.7, 3);
  const bool exact = v.current().model == previous && model_to_json(v.current().model, h).dump() == previous_json;
  return {!early && rolled && exact,
          fmt::format("rollback on third worse validation: {}; parameters bit-exact: {}", rolled, exact)};
}

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = "'" MARS_CLI_PATH "' " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mars_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string trace = (root / "trace.swf").string();
  if (run_cli("gen --count 300 --seed 11 --out " + root.string()).code != 0) return {false, "gen failed"};
  fs::rename(root / "synthetic.swf", trace);
  const std::string small = " --set agent.slots=8 --set agent.hidden=16";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "simulate --trace " + trace + " --policy sjf --seed 1"},
      {"simulate-mars", "simulate --trace " + trace + " --policy mars --explain --seed 1"},
      {"train", "train --trace " + trace + " --epochs 4 --seed 3 --workers 2" + small},
      {"evaluate", "evaluate --trace " + trace + " --train-on-demand --epochs 2 --seed 4" + small},
      {"compare", "compare --trace " + trace + " --policies fcfs,sjf,wfp3,unicef,f1,f2,f3,f4 --seed 5"},
      {"gen", "gen --count 200 --seed 6"},
      {"inspect", "inspect --trace " + trace + " --seed 7"},
  };
  std::vector<std::string> differing;
  std::size_t files = 0;
  for (const auto& [name, args] : commands) {
    std::vector<std::map<std::string, std::string>> outputs;
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / fmt::format("{}-{}", name, run);
      const auto r = run_cli(args + " --out " + out.string());
      if (r.code != 0) return {false, fmt::format("{} exited {}", name, r.code)};
      std::map<std::string, std::string> contents;
      if (fs::exists(out)) {
        for (const auto& e : fs::directory_iterator(out)) contents[e.path().filename().string()] = slurp(e.path());
      }
      if (name == "inspect") contents["stdout"] = r.out;
      outputs.push_back(std::move(contents));
    }
    files += outputs[0].size();
    if (outputs[0].empty() || outputs[0] != outputs[1]) differing.push_back(name);
  }
  fs::remove_all(root);
  return {differing.empty(), differing.empty()
                                 ? fmt::format("{} commands, {} output files byte-identical across two runs",
                                               commands.size(), files)
                                 : "outputs differ for " + fmt::format("{}", fmt::join(differing, ", "))};
}

}  // namespace

int main() {
  criterion("metric formula oracle", 1, metric_oracle);
  criterion("heuristic selection oracle", 10, selection_oracle);
  criterion("simulator conservation", 30, conservation);
  criterion("EASY backfilling never delays the reserved head", 60, easy_property);
  criterion("gradient check", 30, gradient_check);
  criterion("softmax and cost-adjustment validity", 0, softmax_validity);
  criterion("bandit sanity", 10, bandit);
  criterion("learning improvement", 600, learning_improvement);
  criterion("decision-policy totality and branches", 0, decision_policy);
  criterion("mars vs fcfs on SDSC-SP2 slice", 120, mars_vs_fcfs);
  criterion("rollback restores G_{m-1}", 0, rollback);
  criterion("determinism of every command", 0, determinism);
  std::cout << (failures == 0 ? "all criteria passed\n" : fmt::format("{} criteria failed\n", failures));
  return failures == 0 ? 0 : 1;
}
