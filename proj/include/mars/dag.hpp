#pragma once

// Workflow DAGs: a small line-oriented description format, leveling of
// independent tasks for co-submission, recursive halving of oversized
// workloads and a coarse feature-vector similarity between workflows.
//
// Description format, one task per line ('#' starts a comment):
//
//   task <name> cores=<n> runtime=<s> [estimate=<s>] [submit=<s>]
//        [memory=<units>] [io=<units>] [cost=<rate>] [cmd=<label>]
//        [after=<name>,<name>,...]
//
// Task names are arbitrary tokens; job ids are assigned in file order
// starting at 1.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mars/error.hpp"
#include "mars/job.hpp"

namespace mars {

// Resource profile r_j over the modeled resource types.
struct ResourceProfile {
  double processors = 0;
  double memory = 0;
  double io = 0;
  double cost = 0;
};

struct WorkflowTask {
  std::string name;
  std::string command;
  Job job;
  ResourceProfile profile;
};

struct WorkflowDescription {
  std::vector<WorkflowTask> tasks;
  std::vector<std::pair<std::string, std::string>> edges;  // (before, after)
};

class WorkflowDag {
 public:
  const std::map<JobId, Job>& tasks() const { return tasks_; }
  const std::set<std::pair<JobId, JobId>>& edges() const { return edges_; }
  const std::string& name_of(JobId id) const { return names_.at(id); }
  const ResourceProfile& profile(JobId id) const { return profiles_.at(id); }
  std::size_t size() const { return tasks_.size(); }

  const std::vector<JobId>& successors(JobId id) const { return succ_.at(id); }
  const std::vector<JobId>& predecessors(JobId id) const { return pred_.at(id); }

  // Jobs in id order with dependency lists filled in.
  std::vector<Job> jobs() const {
    std::vector<Job> out;
    out.reserve(tasks_.size());
    for (const auto& [id, job] : tasks_) out.push_back(job);
    return out;
  }

  void add_task(const std::string& name, Job job, ResourceProfile profile) {
    const JobId id = job.id;
    names_[id] = name;
    profiles_[id] = profile;
    succ_[id];
    pred_[id];
    tasks_.emplace(id, std::move(job));
  }

  void add_edge(JobId from, JobId to) {
    if (!tasks_.contains(from) || !tasks_.contains(to)) {
      throw ContractError("edge endpoint does not exist");
    }
    if (!edges_.insert({from, to}).second) return;
    succ_[from].push_back(to);
    pred_[to].push_back(from);
    tasks_[to].dependencies.push_back(from);
  }

 private:
  std::map<JobId, Job> tasks_;
  std::map<JobId, std::string> names_;
  std::map<JobId, ResourceProfile> profiles_;
  std::set<std::pair<JobId, JobId>> edges_;
  std::map<JobId, std::vector<JobId>> succ_;
  std::map<JobId, std::vector<JobId>> pred_;
};

namespace detail {

inline double parse_value(std::string_view key, std::string_view value, std::size_t line) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError("bad value for '" + std::string(key) + "': '" + std::string(value) + "'",
                     line);
  }
  return out;
}

// Returns one cycle (first node repeated at the end) or empty.
inline std::vector<JobId> find_cycle(const WorkflowDag& dag) {
  enum class Mark { kWhite, kGrey, kBlack };
  std::map<JobId, Mark> mark;
  std::map<JobId, JobId> parent;
  for (const auto& [id, _] : dag.tasks()) mark[id] = Mark::kWhite;

  for (const auto& [root, _] : dag.tasks()) {
    if (mark[root] != Mark::kWhite) continue;
    // Iterative DFS: (node, next successor index).
    std::vector<std::pair<JobId, std::size_t>> stack{{root, 0}};
    mark[root] = Mark::kGrey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& succ = dag.successors(node);
      if (next == succ.size()) {
        mark[node] = Mark::kBlack;
        stack.pop_back();
        continue;
      }
      const JobId child = succ[next++];
      if (mark[child] == Mark::kGrey) {
        std::vector<JobId> cycle{child};
        for (JobId at = node; at != child; at = parent[at]) cycle.push_back(at);
        std::reverse(cycle.begin() + 1, cycle.end());
        cycle.push_back(child);
        return cycle;
      }
      if (mark[child] == Mark::kWhite) {
        mark[child] = Mark::kGrey;
        parent[child] = node;
        stack.push_back({child, 0});
      }
    }
  }
  return {};
}

}  // namespace detail

inline WorkflowDescription parse_workflow(std::istream& in) {
  WorkflowDescription desc;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream tokens(raw);
    std::string word;
    if (!(tokens >> word)) continue;
    if (word != "task") throw ParseError("expected 'task', got '" + word + "'", line_no);

    WorkflowTask task;
    if (!(tokens >> task.name)) throw ParseError("task without a name", line_no);
    if (!seen.insert(task.name).second) {
      throw ParseError("duplicate task '" + task.name + "'", line_no);
    }
    task.job.id = static_cast<JobId>(desc.tasks.size() + 1);
    bool has_cores = false;
    bool has_runtime = false;
    double estimate = 0;
    while (tokens >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) throw ParseError("expected key=value, got '" + word + "'", line_no);
      const std::string_view key(word.data(), eq);
      const std::string_view value(word.data() + eq + 1, word.size() - eq - 1);
      if (key == "cmd") {
        task.command = std::string(value);
      } else if (key == "after") {
        std::size_t pos = 0;
        while (pos <= value.size()) {
          auto comma = value.find(',', pos);
          if (comma == std::string_view::npos) comma = value.size();
          if (comma > pos) desc.edges.emplace_back(std::string(value.substr(pos, comma - pos)), task.name);
          pos = comma + 1;
        }
      } else {
        const double v = detail::parse_value(key, value, line_no);
        if (key == "cores") {
          task.job.requested_procs = static_cast<int>(v);
          has_cores = true;
        } else if (key == "runtime") {
          task.job.run_time = v;
          has_runtime = true;
        } else if (key == "estimate") {
          estimate = v;
        } else if (key == "submit") {
          task.job.submit_time = v;
        } else if (key == "memory") {
          task.profile.memory = v;
        } else if (key == "io") {
          task.profile.io = v;
        } else if (key == "cost") {
          task.job.cost_rate = v;
        } else {
          throw ParseError("unknown key '" + std::string(key) + "'", line_no);
        }
      }
    }
    if (!has_cores || !has_runtime) throw ParseError("task needs cores= and runtime=", line_no);
    task.job.requested_time = estimate > 0 ? estimate : task.job.run_time;
    task.profile.processors = task.job.requested_procs;
    task.profile.cost = task.job.cost_rate;
    try {
      validate_job(task.job);
    } catch (const ContractError& e) {
      throw ParseError(e.what(), line_no);
    }
    desc.tasks.push_back(std::move(task));
  }
  return desc;
}

inline WorkflowDescription parse_workflow_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_workflow(in);
}

// Builds and validates the DAG. Unknown dependencies and cycles are errors;
// a cycle error names one witness cycle.
inline WorkflowDag build_dag(const WorkflowDescription& desc) {
  WorkflowDag dag;
  std::unordered_map<std::string, JobId> ids;
  for (const auto& task : desc.tasks) {
    ids[task.name] = task.job.id;
    dag.add_task(task.name, task.job, task.profile);
  }
  for (const auto& [from, to] : desc.edges) {
    auto f = ids.find(from);
    if (f == ids.end()) throw ParseError("task '" + to + "' depends on unknown task '" + from + "'");
    dag.add_edge(f->second, ids.at(to));
  }
  if (auto cycle = detail::find_cycle(dag); !cycle.empty()) {
    std::string names;
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      if (i) names += " -> ";
      names += dag.name_of(cycle[i]);
    }
    throw CycleError("dependency cycle: " + names);
  }
  return dag;
}

// Level of each task = longest path (in edges) from any source.
inline std::map<JobId, std::size_t> longest_path_levels(const WorkflowDag& dag) {
  std::map<JobId, std::size_t> indegree;
  std::map<JobId, std::size_t> level;
  std::vector<JobId> ready;
  for (const auto& [id, _] : dag.tasks()) {
    indegree[id] = dag.predecessors(id).size();
    level[id] = 0;
    if (indegree[id] == 0) ready.push_back(id);
  }
  std::size_t visited = 0;
  for (std::size_t head = 0; head < ready.size(); ++head) {
    const JobId id = ready[head];
    ++visited;
    for (JobId next : dag.successors(id)) {
      level[next] = std::max(level[next], level[id] + 1);
      if (--indegree[next] == 0) ready.push_back(next);
    }
  }
  if (visited != dag.size()) throw CycleError("dependency cycle");
  return level;
}

// Groups tasks that can be co-submitted: tasks on one level have no path
// between them, and the concatenation of levels is a topological order.
inline std::vector<std::vector<JobId>> combine_parallel_tasks(const WorkflowDag& dag) {
  std::vector<std::vector<JobId>> levels;
  for (const auto& [id, lvl] : longest_path_levels(dag)) {
    if (levels.size() <= lvl) levels.resize(lvl + 1);
    levels[lvl].push_back(id);
  }
  return levels;
}

// Halves every chunk larger than max_size (first half gets the extra
// element) until all chunks fit. Order is preserved.
template <typename T>
std::vector<std::vector<T>> split_workload(const std::vector<T>& items, std::size_t max_size) {
  if (max_size < 1) throw ContractError("split_workload: max_size must be >= 1");
  std::vector<std::vector<T>> chunks{items};
  bool split = true;
  while (split) {
    split = false;
    std::vector<std::vector<T>> next;
    for (auto& chunk : chunks) {
      if (chunk.size() <= max_size) {
        next.push_back(std::move(chunk));
        continue;
      }
      split = true;
      const auto first = static_cast<std::ptrdiff_t>((chunk.size() + 1) / 2);
      next.emplace_back(chunk.begin(), chunk.begin() + first);
      next.emplace_back(chunk.begin() + first, chunk.end());
    }
    chunks = std::move(next);
  }
  return chunks;
}

struct DagFeatures {
  double task_count = 0;
  double depth = 0;  // nodes on the longest path
  double width = 0;  // largest level
  double core_seconds = 0;
  double mean_cores = 0;

  std::array<double, 5> as_array() const {
    return {task_count, depth, width, core_seconds, mean_cores};
  }
};

inline DagFeatures dag_features(const WorkflowDag& dag) {
  DagFeatures f;
  if (dag.size() == 0) return f;
  const auto levels = combine_parallel_tasks(dag);
  f.task_count = static_cast<double>(dag.size());
  f.depth = static_cast<double>(levels.size());
  for (const auto& level : levels) f.width = std::max(f.width, static_cast<double>(level.size()));
  double cores = 0;
  for (const auto& [_, job] : dag.tasks()) {
    f.core_seconds += job.requested_procs * job.run_time;
    cores += job.requested_procs;
  }
  f.mean_cores = cores / f.task_count;
  return f;
}

// 1 - mean over features of |a - b| / max(a, b); a feature that is zero on
// both sides contributes no difference.
inline double dag_similarity(const DagFeatures& a, const DagFeatures& b) {
  const auto x = a.as_array();
  const auto y = b.as_array();
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double scale = std::max(std::abs(x[i]), std::abs(y[i]));
    if (scale > 0) total += std::abs(x[i] - y[i]) / scale;
  }
  return std::clamp(1.0 - total / static_cast<double>(x.size()), 0.0, 1.0);
}

}  // namespace mars
