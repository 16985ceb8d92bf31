// mars: command-line front end for the scheduling simulator.
//
//   mars simulate --trace sdsc.swf --policy sjf --out run1
//   mars train    --synthetic 512 --epochs 200 --seed 7 --out model1
//   mars evaluate --trace sdsc.swf --model model1/model.json
//   mars compare  --trace sdsc.swf --policies fcfs,sjf,mars --model m.json
//   mars gen      --count 512 --seed 7 --out traces
//   mars inspect  --trace sdsc.swf
//
// Settings are layered: built-in defaults, then the config file (--config,
// or the path in $MARS_CONFIG), then command-line flags.
//
// Exit codes: 0 ok, 2 usage/config/input, 3 training diverged, 4 I/O.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mars/mars.hpp"

namespace fs = std::filesystem;
using namespace mars;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

// Flag values; unset optionals leave the config untouched.
struct Flags {
  std::string config;
  std::vector<std::string> traces;
  std::string workflow;
  std::optional<std::size_t> synthetic;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<int> procs;
  std::optional<std::string> backfill;
  std::optional<std::string> out;
  std::optional<std::size_t> slice_start;
  std::optional<std::size_t> slice_count;
  bool slice_shuffle = false;
  std::vector<std::string> sets;  // section.key=value

  std::optional<std::string> policy;
  std::vector<std::string> policies;
  std::string model;
  std::optional<int> epochs;
  std::optional<int> workers;
  std::string resume;
  bool ppo = false;
  bool explain = false;
  bool train_on_demand = false;
  bool train_from_heuristic = false;
};

void add_source_options(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "config file (default: $MARS_CONFIG)");
  app->add_option("--trace", f.traces, "SWF trace; repeat to schedule several workloads in order")
      ->delimiter(',');
  app->add_option("--workflow", f.workflow, "workflow description file");
  app->add_option("--synthetic", f.synthetic, "generate a synthetic workload of N jobs");
  app->add_option("--seed", f.seed, "seed for generation, sampling and training");
  app->add_option("--tau", f.tau, "bounded-slowdown threshold in seconds");
  app->add_option("--procs", f.procs, "processor count (default: the trace's)");
  app->add_option("--backfill", f.backfill, "EASY backfilling")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--out", f.out, "output directory");
  app->add_option("--slice-start", f.slice_start, "first job of the slice");
  app->add_option("--slice-count", f.slice_count, "jobs in the slice (0: all)");
  app->add_flag("--slice-shuffle", f.slice_shuffle, "sample the slice at random");
  app->add_option("--set", f.sets, "override a config key, e.g. agent.slots=16");
}

void add_model_options(CLI::App* app, Flags& f) {
  app->add_option("--model", f.model, "model file for rl/mars");
  app->add_option("--epochs", f.epochs, "training epochs");
  app->add_option("--workers", f.workers, "rollout workers");
  app->add_flag("--train-on-demand", f.train_on_demand, "train a model when none is given");
}

RunConfig build_config(const Flags& f) {
  RunConfig c;
  std::string path = f.config;
  if (path.empty()) {
    if (const char* env = std::getenv("MARS_CONFIG"); env && *env) path = env;
  }
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    apply_config_file(c, path);
  }
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    const auto dot = kv.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    }
    set_config_value(c, kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
  }
  if (!f.traces.empty()) c.traces = f.traces;
  if (!f.workflow.empty()) c.workflow = f.workflow;
  if (f.synthetic) {
    if (!c.synthetic) c.synthetic = SyntheticConfig{};
    c.synthetic->job_count = *f.synthetic;
  }
  if (f.seed) {
    c.seed = *f.seed;
    if (c.synthetic) c.synthetic->seed = *f.seed;
  }
  if (f.tau) c.tau = *f.tau;
  if (f.procs) c.procs = *f.procs;
  if (f.backfill) c.backfill = *f.backfill == "on";
  if (f.out) c.out = *f.out;
  if (f.slice_start) c.slice_start = *f.slice_start;
  if (f.slice_count) c.slice_count = *f.slice_count;
  if (f.slice_shuffle) c.slice_shuffle = true;
  if (f.policy) c.policy = *f.policy;
  if (!f.policies.empty()) c.policies = f.policies;
  if (!f.model.empty()) c.model = f.model;
  if (f.epochs) c.hyper.epochs = *f.epochs;
  if (f.workers) c.hyper.workers = *f.workers;
  if (f.ppo) c.hyper.ppo = true;
  if (f.explain) c.explain = true;
  if (f.train_on_demand) c.train_on_demand = true;
  if (f.train_from_heuristic) c.train_from_heuristic = true;
  c.hyper.seed = c.seed;
  c.hyper.tau = c.tau;
  validate(c);
  return c;
}

std::ifstream open_input(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("{} not found: {}", what, path));
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {} {}", what, path));
  return in;
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

SimOptions sim_options(const RunConfig& c) {
  SimOptions o;
  o.total_procs = c.procs;
  o.backfill = c.backfill;
  o.tau = c.tau;
  return o;
}

WorkloadTrace apply_slice_and_procs(WorkloadTrace t, const RunConfig& c) {
  if (c.slice_count > 0) t = slice_trace(t, c.slice_start, c.slice_count, c.seed, c.slice_shuffle);
  if (c.procs > 0) t.total_procs = c.procs;
  validate_trace(t);
  return t;
}

WorkloadTrace load_swf(const std::string& path, const RunConfig& c) {
  auto in = open_input(path, "trace");
  auto parsed = parse_swf(in, fs::path(path).stem().string());
  for (const auto& e : parsed.errors) std::cerr << fmt::format("{}:{}: {}\n", path, e.line, e.message);
  if (parsed.dropped) std::cerr << fmt::format("{}: dropped {} jobs\n", path, parsed.dropped);
  assign_costs(parsed.trace, c.cost_mean, c.cost_stddev, c.seed);
  return parsed.trace;
}

WorkloadTrace load_workflow(const std::string& path, const RunConfig& c) {
  auto in = open_input(path, "workflow");
  const auto dag = build_dag(parse_workflow(in));
  WorkloadTrace t;
  t.name = fs::path(path).stem().string();
  t.jobs = dag.jobs();
  sort_by_submit(t.jobs);
  t.total_procs = 1;
  for (const auto& j : t.jobs) t.total_procs = std::max(t.total_procs, j.requested_procs);
  if (c.procs > 0) t.total_procs = c.procs;
  return t;
}

// Unsliced workloads in the order they should be scheduled.
std::vector<WorkloadTrace> load_raw_workloads(const RunConfig& c) {
  std::vector<WorkloadTrace> out;
  for (const auto& path : c.traces) out.push_back(load_swf(path, c));
  if (!c.workflow.empty()) out.push_back(load_workflow(c.workflow, c));
  if (out.empty() && c.synthetic) out.push_back(generate_synthetic(*c.synthetic));
  if (out.empty()) throw ConfigError("no workload: give --trace, --workflow or --synthetic");
  return out;
}

std::vector<WorkloadTrace> load_workloads(const RunConfig& c) {
  std::vector<WorkloadTrace> out;
  for (auto& t : load_raw_workloads(c)) {
    if (t.empty()) throw ConfigError("workload '" + t.name + "' has no jobs");
    out.push_back(apply_slice_and_procs(std::move(t), c));
  }
  return out;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"p95", s.p95}};
}

nlohmann::json report_json(const MetricsReport& r) {
  return {{"schema", kReportSchema},
          {"policy", r.policy},
          {"jobs", r.job_count},
          {"tau", r.tau},
          {"procs", r.total_procs},
          {"makespan", r.makespan},
          {"slowdown", summary_json(r.slowdown)},
          {"bounded_slowdown", summary_json(r.bounded_slowdown)},
          {"pp_slowdown", summary_json(r.pp_slowdown)}};
}

// Models for rl and mars: loaded once, trained on demand, or refined on
// heuristic chunks.
class ModelSource {
 public:
  explicit ModelSource(RunConfig& c) : cfg_(c) {}

  bool available() const { return !cfg_.model.empty() || cfg_.train_on_demand; }

  // The model to schedule `trace` with; trains on it if nothing was loaded.
  const AgentModel& get(const WorkloadTrace& trace) {
    if (model_) return *model_;
    if (!cfg_.model.empty()) {
      open_input(cfg_.model, "model file");
      auto loaded = load_model(cfg_.model);
      cfg_.hyper = hyper_from_json(cfg_.hyper, loaded.hyper);
      model_ = std::make_unique<AgentModel>(std::move(loaded.model));
      return *model_;
    }
    if (!cfg_.train_on_demand) {
      throw ConfigError("the rl policy needs --model or --train-on-demand");
    }
    std::cerr << fmt::format("training a model on '{}' ({} jobs, {} epochs)\n", trace.name,
                             trace.size(), cfg_.hyper.epochs);
    train_on(trace, AgentModel(cfg_.hyper));
    return *model_;
  }

  // Refines (or creates) the model on a workload scheduled by a heuristic.
  void refine(const WorkloadTrace& trace) {
    AgentModel start = model_ ? *model_ : AgentModel(cfg_.hyper);
    if (!model_ && !cfg_.model.empty()) start = get(trace);
    train_on(trace, std::move(start));
  }

  bool trained() const { return trained_; }
  const AgentModel* model() const { return model_.get(); }

 private:
  void train_on(const WorkloadTrace& trace, AgentModel start) {
    TrainOptions opts;
    opts.sim = sim_options(cfg_);
    auto result = train(fixed_trace_env(trace), cfg_.hyper, std::move(start), {}, opts);
    if (result.diverged) throw DivergenceError("training diverged on '" + trace.name + "'");
    model_ = std::make_unique<AgentModel>(std::move(result.model));
    trained_ = true;
  }

  RunConfig& cfg_;
  std::unique_ptr<AgentModel> model_;
  bool trained_ = false;
};

struct PolicyRun {
  MetricsReport report;
  std::vector<Job> finished;
  std::vector<std::string> job_policy;  // parallel to finished
  nlohmann::json plans;                 // mars only
  nlohmann::json chunks;                // mars only
};

PolicyRun run_mars(const std::vector<WorkloadTrace>& workloads, RunConfig& c, ModelSource& models) {
  PolicyRun out;
  out.plans = nlohmann::json::array();
  out.chunks = nlohmann::json::array();
  PlanRunOptions opts;
  opts.sim = sim_options(c);
  opts.rl = [&](const WorkloadTrace& chunk) -> std::unique_ptr<SchedulingPolicy> {
    if (!models.available()) return nullptr;
    const AgentModel& m = models.get(chunk);
    return std::make_unique<AgentPolicy>(m, c.hyper, c.seed, /*greedy=*/true, /*record=*/false);
  };
  if (c.train_from_heuristic) opts.on_heuristic_chunk = [&](const WorkloadTrace& t) { models.refine(t); };

  std::vector<Job> all;
  int procs = 0;
  for (const auto& plan : decide_all(workloads, c.thresholds)) {
    out.plans.push_back(plan_to_json(plan));
    if (plan.chunks.empty()) continue;
    const auto result = run_plan(plan, opts);
    for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
      const auto& r = result.chunks[i];
      const std::string label(policy_name(plan.chunks[i].policy));
      auto chunk = report_json(r.report);
      chunk["policy"] = label;
      chunk["provenance"] = plan.chunks[i].provenance;
      out.chunks.push_back(std::move(chunk));
      for (const auto& j : r.finished) {
        all.push_back(j);
        out.job_policy.push_back(label);
      }
      procs = std::max(procs, r.report.total_procs);
    }
  }
  if (all.empty()) throw ConfigError("mars: nothing to schedule");
  out.report = aggregate(all, c.tau, "mars", procs);
  out.finished = std::move(all);
  return out;
}

PolicyRun run_policy(const std::string& name, const std::vector<WorkloadTrace>& workloads, RunConfig& c,
                     ModelSource& models) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "mars") return run_mars(workloads, c, models);
  const auto kind = parse_policy(lower);
  if (!kind) throw ConfigError("unknown policy '" + name + "'");
  if (workloads.size() != 1) throw ConfigError("several workloads need --policy mars");
  const auto& trace = workloads.front();
  EpisodeResult r;
  if (*kind == PolicyKind::kRl) {
    if (!models.available()) throw ConfigError("the rl policy needs --model or --train-on-demand");
    AgentPolicy policy(models.get(trace), c.hyper, c.seed, /*greedy=*/true, /*record=*/false);
    r = run_episode(trace, policy, sim_options(c));
  } else {
    r = run_episode(trace, *kind, sim_options(c));
  }
  PolicyRun out;
  out.report = std::move(r.report);
  out.finished = std::move(r.finished);
  out.job_policy.assign(out.finished.size(), std::string(policy_name(*kind)));
  return out;
}

std::string jobs_csv(const PolicyRun& run) {
  std::vector<std::size_t> order(run.finished.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return run.finished[a].id < run.finished[b].id; });
  std::ostringstream out;
  out << "# schema: " << kJobsSchema << "\n";
  out << "id,submit,start,end,wait,procs,policy\n";
  for (auto i : order) {
    const Job& j = run.finished[i];
    out << fmt::format("{},{},{},{},{},{},{}\n", j.id, j.submit_time, j.start_time(), j.end_time(),
                       j.wait_time.value_or(0), j.requested_procs, run.job_policy[i]);
  }
  return out.str();
}

void write_run_outputs(const fs::path& dir, const PolicyRun& run, const RunConfig& c) {
  write_file(dir / "jobs.csv", jobs_csv(run));
  std::ostringstream csv;
  write_report_csv_header(csv);
  write_report_csv_row(run.report, csv);
  write_file(dir / "report.csv", csv.str());
  auto json = report_json(run.report);
  if (!run.chunks.is_null()) json["chunks"] = run.chunks;
  write_file(dir / "report.json", json.dump(2) + "\n");
  if (c.explain && !run.plans.is_null()) write_file(dir / "plan.json", run.plans.dump(2) + "\n");
}

void save_trained_model(const fs::path& dir, const ModelSource& models, const RunConfig& c) {
  if (models.trained()) {
    write_file(dir / "model.json", model_to_json(*models.model(), c.hyper).dump() + "\n");
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(RunConfig c) {
  const auto workloads = load_workloads(c);
  ModelSource models(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = run_policy(c.policy, workloads, c, models);
  const fs::path dir = c.out;
  write_run_outputs(dir, run, c);
  save_trained_model(dir, models, c);
  if (c.explain && !run.plans.is_null()) std::cout << run.plans.dump(2) << "\n";
  std::cout << fmt::format("{}: {} jobs, mean bsld {:.4f}, median {:.4f}, p95 {:.4f}, makespan {} ({:.2f}s)\n",
                           run.report.policy, run.report.job_count, run.report.bounded_slowdown.mean,
                           run.report.bounded_slowdown.median, run.report.bounded_slowdown.p95,
                           run.report.makespan, seconds_since(t0));
  return 0;
}

int cmd_evaluate(RunConfig c) {
  c.policy = "rl";
  if (c.model.empty() && !c.train_on_demand) throw ConfigError("evaluate needs --model or --train-on-demand");
  return cmd_simulate(std::move(c));
}

// Held-out validation trace: the window after the training slice when the
// trace has one, a differently seeded synthetic trace, or the training
// trace itself.
WorkloadTrace validation_trace(const RunConfig& c, const WorkloadTrace& raw, const WorkloadTrace& training) {
  if (c.traces.empty() && c.workflow.empty() && c.synthetic) {
    auto cfg = *c.synthetic;
    cfg.seed = cfg.seed + 1;
    return apply_slice_and_procs(generate_synthetic(cfg), c);
  }
  if (c.slice_count > 0 && !c.slice_shuffle && c.slice_start + 2 * c.slice_count <= raw.size()) {
    auto held = c;
    held.slice_start = c.slice_start + c.slice_count;
    return apply_slice_and_procs(raw, held);
  }
  return training;
}

int cmd_train(RunConfig c, const std::string& resume) {
  const auto raw = load_raw_workloads(c);
  if (raw.size() != 1) throw ConfigError("train takes one workload");
  const auto training = apply_slice_and_procs(raw.front(), c);
  AgentModel model(c.hyper);
  if (!resume.empty()) {
    open_input(resume, "model file");
    auto loaded = load_model(resume);
    c.hyper = hyper_from_json(c.hyper, loaded.hyper);
    model = std::move(loaded.model);
  }
  validate(c.hyper);

  TrainOptions opts;
  opts.sim = sim_options(c);
  opts.validation = validation_trace(c, raw.front(), training);
  opts.on_epoch = [&](const CurvePoint& p, double secs) {
    if (p.validation_reward || p.epoch % 10 == 0) {
      std::cerr << fmt::format("epoch {}: reward {:.4f} entropy {:.3f}{}{} [{:.1f}s]\n", p.epoch,
                               p.mean_reward, p.entropy,
                               p.validation_reward ? fmt::format(" validation {:.4f}", *p.validation_reward) : "",
                               p.rolled_back ? " (rolled back)" : "", secs);
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(fixed_trace_env(training), c.hyper, std::move(model), {}, opts);

  const fs::path dir = c.out;
  std::ostringstream curve;
  write_curve_csv(result.curve, curve);
  write_file(dir / "curve.csv", curve.str());
  const auto& history = result.versions.history;
  std::optional<double> current_reward;
  if (!history.empty() && history.front().model == result.model) current_reward = history.front().validation_reward;
  write_file(dir / "model.json", model_to_json(result.model, c.hyper, current_reward).dump() + "\n");
  for (std::size_t i = 1; i < history.size(); ++i) {
    write_file(dir / fmt::format("model.prev{}.json", i),
               model_to_json(history[i].model, c.hyper, history[i].validation_reward).dump() + "\n");
  }
  if (result.diverged) {
    std::cerr << fmt::format("training diverged at epoch {}; kept the last good model\n",
                             result.curve.empty() ? 0 : result.curve.back().epoch);
    return kExitDiverged;
  }
  std::cout << fmt::format("trained {} epochs (now at {}), {} rollbacks, {:.2f}s\n", c.hyper.epochs,
                           result.model.epoch, result.versions.rollbacks, seconds_since(t0));
  return 0;
}

int cmd_compare(RunConfig c) {
  if (c.policies.size() < 2) throw ConfigError("compare needs at least two policies");
  const auto workloads = load_workloads(c);
  ModelSource models(c);
  std::ostringstream csv;
  write_report_csv_header(csv);
  nlohmann::json plans;
  std::cout << fmt::format("{:<8} {:>6} {:>12} {:>12} {:>12} {:>14} {:>9}\n", "policy", "jobs", "mean_bsld",
                           "median_bsld", "p95_bsld", "makespan", "wall_s");
  for (const auto& name : c.policies) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = run_policy(name, workloads, c, models);
    const double wall = seconds_since(t0);
    write_report_csv_row(run.report, csv);
    if (!run.plans.is_null()) plans = run.plans;
    std::cout << fmt::format("{:<8} {:>6} {:>12.4f} {:>12.4f} {:>12.4f} {:>14} {:>9.3f}\n", run.report.policy,
                             run.report.job_count, run.report.bounded_slowdown.mean,
                             run.report.bounded_slowdown.median, run.report.bounded_slowdown.p95,
                             run.report.makespan, wall);
  }
  const fs::path dir = c.out;
  write_file(dir / "compare.csv", csv.str());
  if (c.explain && !plans.is_null()) write_file(dir / "plan.json", plans.dump(2) + "\n");
  save_trained_model(dir, models, c);
  return 0;
}

int cmd_gen(RunConfig c) {
  if (!c.synthetic) throw ConfigError("gen needs --count or a [synthetic] section");
  const auto trace = generate_synthetic(*c.synthetic);
  const fs::path path = fs::path(c.out) / (c.synthetic->name + ".swf");
  write_file(path, to_swf_text(trace));
  std::cout << fmt::format("wrote {} jobs to {}\n", trace.size(), path.string());
  return 0;
}

int cmd_inspect(const RunConfig& c) {
  nlohmann::json out = nlohmann::json::object();
  if (!c.model.empty()) {
    open_input(c.model, "model file");
    const auto m = load_model(c.model);
    out["model"] = {{"format", kModelFormat},
                    {"slots", m.model.slots},
                    {"epoch", m.model.epoch},
                    {"actor_parameters", m.model.actor.parameter_count()},
                    {"critic_parameters", m.model.critic.parameter_count()},
                    {"hyper", m.hyper}};
    if (m.validation_reward) out["model"]["validation_reward"] = *m.validation_reward;
  }
  if (!c.workflow.empty()) {
    auto in = open_input(c.workflow, "workflow");
    const auto dag = build_dag(parse_workflow(in));
    const auto f = dag_features(dag);
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& level : combine_parallel_tasks(dag)) {
      nlohmann::json names = nlohmann::json::array();
      for (auto id : level) names.push_back(dag.name_of(id));
      levels.push_back(names);
    }
    out["workflow"] = {{"tasks", f.task_count}, {"depth", f.depth},           {"width", f.width},
                       {"core_seconds", f.core_seconds}, {"mean_cores", f.mean_cores}, {"levels", levels}};
  }
  if (!c.traces.empty() || c.synthetic || (c.model.empty() && c.workflow.empty())) {
    nlohmann::json traces = nlohmann::json::array();
    RunConfig only_traces = c;
    only_traces.workflow.clear();
    for (const auto& t : load_workloads(only_traces)) {
      double work = 0, runtime = 0;
      for (const auto& j : t.jobs) {
        work += j.run_time * j.requested_procs;
        runtime += j.run_time;
      }
      const double span = t.jobs.back().submit_time - t.jobs.front().submit_time;
      const auto plan = decide(t, nullptr, c.thresholds);
      traces.push_back({{"name", t.name},
                        {"jobs", t.size()},
                        {"procs", t.total_procs},
                        {"first_submit", t.jobs.front().submit_time},
                        {"last_submit", t.jobs.back().submit_time},
                        {"mean_runtime", runtime / static_cast<double>(t.size())},
                        {"offered_load", span > 0 ? work / (span * t.total_procs) : 0.0},
                        {"mars_branch", branch_name(plan.branch)}});
    }
    out["traces"] = traces;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HPC scheduling simulator with heuristic, learned and routed (mars) policies"};
  app.require_subcommand(1);
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "run one policy over a workload");
  add_source_options(simulate, f);
  add_model_options(simulate, f);
  simulate->add_option("--policy", f.policy, "fcfs|sjf|wfp3|unicef|f1..f4|rl|mars");
  simulate->add_flag("--explain", f.explain, "write and print the mars plan");
  simulate->add_flag("--train-from-heuristic", f.train_from_heuristic,
                     "also train the model on workloads routed to heuristics");

  auto* train_cmd = app.add_subcommand("train", "train the actor-critic agent");
  add_source_options(train_cmd, f);
  train_cmd->add_option("--epochs", f.epochs, "training epochs");
  train_cmd->add_option("--workers", f.workers, "rollout workers");
  train_cmd->add_option("--resume", f.resume, "continue from a saved model");
  train_cmd->add_flag("--ppo", f.ppo, "clipped-surrogate updates instead of per-step actor-critic");

  auto* evaluate = app.add_subcommand("evaluate", "greedy evaluation of a model");
  add_source_options(evaluate, f);
  add_model_options(evaluate, f);

  auto* compare = app.add_subcommand("compare", "run several policies on the same workload");
  add_source_options(compare, f);
  add_model_options(compare, f);
  compare->add_option("--policies", f.policies, "comma-separated policy list")->delimiter(',');
  compare->add_flag("--explain", f.explain, "write the mars plan");
  compare->add_flag("--train-from-heuristic", f.train_from_heuristic,
                    "also train the model on workloads routed to heuristics");

  auto* gen = app.add_subcommand("gen", "write a synthetic SWF trace");
  add_source_options(gen, f);
  gen->add_option("--count", f.synthetic, "number of jobs");

  auto* inspect = app.add_subcommand("inspect", "summarize traces, workflows or model files");
  add_source_options(inspect, f);
  inspect->add_option("--model", f.model, "model file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    auto cfg = build_config(f);
    if (*simulate) return cmd_simulate(std::move(cfg));
    if (*train_cmd) return cmd_train(std::move(cfg), f.resume);
    if (*evaluate) return cmd_evaluate(std::move(cfg));
    if (*compare) return cmd_compare(std::move(cfg));
    if (*gen) return cmd_gen(std::move(cfg));
    if (*inspect) return cmd_inspect(cfg);
  } catch (const DivergenceError& e) {
    std::cerr << "mars: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const IoError& e) {
    std::cerr << "mars: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "mars: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "mars: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
