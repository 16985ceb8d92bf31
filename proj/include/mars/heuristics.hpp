#pragma once

// Closed-form priority policies. Every policy is "lowest score first"; ties
// go to the earlier submit time, then the smaller id.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mars/error.hpp"
#include "mars/job.hpp"

namespace mars {

enum class PolicyKind { kFcfs, kSjf, kWfp3, kUnicef, kF1, kF2, kF3, kF4, kRl };

inline constexpr std::array<PolicyKind, 8> kHeuristicPolicies = {
    PolicyKind::kFcfs, PolicyKind::kSjf, PolicyKind::kWfp3, PolicyKind::kUnicef,
    PolicyKind::kF1,   PolicyKind::kF2,  PolicyKind::kF3,   PolicyKind::kF4};

inline std::string_view policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFcfs: return "fcfs";
    case PolicyKind::kSjf: return "sjf";
    case PolicyKind::kWfp3: return "wfp3";
    case PolicyKind::kUnicef: return "unicef";
    case PolicyKind::kF1: return "f1";
    case PolicyKind::kF2: return "f2";
    case PolicyKind::kF3: return "f3";
    case PolicyKind::kF4: return "f4";
    case PolicyKind::kRl: return "rl";
  }
  return "?";
}

// Case-insensitive; "mars" is not a PolicyKind and is handled by callers.
inline std::optional<PolicyKind> parse_policy(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : kHeuristicPolicies) {
    if (policy_name(kind) == lower) return kind;
  }
  if (lower == "rl") return PolicyKind::kRl;
  return std::nullopt;
}

namespace detail {
inline double log10_clamped(double x) { return std::log10(std::max(x, 1.0)); }
}  // namespace detail

// Priority score of a pending job at time `now`; lower runs first.
inline double score(const Job& job, Seconds now, PolicyKind kind) {
  const double s = job.submit_time;
  const double r = job.requested_time;
  const double n = job.requested_procs;
  const double w = std::max(0.0, now - job.submit_time);
  switch (kind) {
    case PolicyKind::kFcfs:
      return s;
    case PolicyKind::kSjf:
      return r;
    case PolicyKind::kWfp3:
      return -std::pow(w / r, 3) * n;
    case PolicyKind::kUnicef: {
      // log2(1) = 0; a single-processor job uses a factor of 1 instead.
      const double width = n > 1 ? std::log2(n) : 1.0;
      return -w / (width * r);
    }
    case PolicyKind::kF1:
      return detail::log10_clamped(r) * n + 8.70e2 * detail::log10_clamped(s);
    case PolicyKind::kF2:
      return std::sqrt(r) * n + 2.56e4 * detail::log10_clamped(s);
    case PolicyKind::kF3:
      return r * n + 6.86e6 * detail::log10_clamped(s);
    case PolicyKind::kF4:
      return r * std::sqrt(n) + 5.30e5 * detail::log10_clamped(s);
    case PolicyKind::kRl:
      break;
  }
  throw ContractError("score: the RL policy has no closed-form score");
}

// Strict weak order "a runs before b".
inline bool higher_priority(const Job& a, double score_a, const Job& b, double score_b) {
  if (score_a != score_b) return score_a < score_b;
  if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
  return a.id < b.id;
}

// Index of the highest-priority job, or nullopt for an empty queue.
inline std::optional<std::size_t> priority_head(std::span<const Job* const> queue, Seconds now,
                                                PolicyKind kind) {
  std::optional<std::size_t> best;
  double best_score = 0;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const double sc = score(*queue[i], now, kind);
    if (!best || higher_priority(*queue[i], sc, *queue[*best], best_score)) {
      best = i;
      best_score = sc;
    }
  }
  return best;
}

// Queue sorted by priority (scores evaluated once).
inline std::vector<const Job*> priority_order(std::span<const Job* const> queue, Seconds now,
                                              PolicyKind kind) {
  std::vector<std::pair<double, const Job*>> scored;
  scored.reserve(queue.size());
  for (const Job* job : queue) scored.emplace_back(score(*job, now, kind), job);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return higher_priority(*a.second, a.first, *b.second, b.first);
  });
  std::vector<const Job*> out;
  out.reserve(scored.size());
  for (const auto& [_, job] : scored) out.push_back(job);
  return out;
}

// Strict priority selection over dependency-ready pending jobs: the
// highest-priority job if it fits in `free_procs`, otherwise pass (nullopt).
// Lower-priority jobs only jump ahead through the backfilling path.
inline std::optional<JobId> select_next(std::span<const Job* const> queue, Seconds now,
                                        PolicyKind kind, int free_procs) {
  const auto head = priority_head(queue, now, kind);
  if (!head) return std::nullopt;
  const Job& job = *queue[*head];
  if (job.requested_procs > free_procs) return std::nullopt;
  return job.id;
}

}  // namespace mars
