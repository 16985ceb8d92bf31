#pragma once

// Standard Workload Format (v2.2) reader and writer.
//
// Each data line has 18 whitespace-separated numeric fields; lines starting
// with ';' are header comments. The fields used here:
//   1 job number, 2 submit time, 4 run time, 5 allocated processors,
//   8 requested processors, 9 requested time.
// A header line "; MaxProcs: N" (or "; MaxNodes: N") sets the system size.

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "mars/error.hpp"
#include "mars/job.hpp"

namespace mars {

inline constexpr int kSwfFieldCount = 18;

struct SwfLineError {
  std::size_t line = 0;
  std::string message;
};

struct SwfParseResult {
  WorkloadTrace trace;
  std::size_t dropped = 0;  // filtered by the T_r / n_t rules
  std::vector<SwfLineError> errors;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool parse_number(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

// Splits on whitespace; returns false on a non-numeric token.
inline bool split_fields(std::string_view line, std::vector<double>& fields) {
  fields.clear();
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    double value = 0;
    if (!parse_number(line.substr(pos, end - pos), value)) return false;
    fields.push_back(value);
    pos = end;
  }
  return true;
}

// Parses "; Key: value" header lines into the system size.
inline void parse_header(std::string_view line, int& max_procs, int& max_nodes) {
  line.remove_prefix(1);
  line = trim(line);
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return;
  const auto key = trim(line.substr(0, colon));
  const auto value = trim(line.substr(colon + 1));
  int parsed = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || parsed <= 0) return;
  if (key == "MaxProcs") max_procs = parsed;
  if (key == "MaxNodes") max_nodes = parsed;
}

}  // namespace detail

// Parses SWF text. Per-line problems are collected in `errors`; a trace with
// no usable job is a hard error.
inline SwfParseResult parse_swf(std::istream& in, std::string name = "swf") {
  SwfParseResult result;
  result.trace.name = std::move(name);
  int max_procs = 0;
  int max_nodes = 0;
  std::string raw;
  std::vector<double> f;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == ';') {
      detail::parse_header(line, max_procs, max_nodes);
      continue;
    }
    if (!detail::split_fields(line, f)) {
      result.errors.push_back({line_no, "non-numeric field"});
      continue;
    }
    if (f.size() != kSwfFieldCount) {
      result.errors.push_back(
          {line_no, fmt::format("expected {} fields, got {}", kSwfFieldCount, f.size())});
      continue;
    }
    Job job;
    job.id = static_cast<JobId>(f[0]);
    job.submit_time = f[1];
    job.run_time = f[3];
    double procs = f[4] == -1 ? f[7] : f[4];
    job.requested_procs = static_cast<int>(procs);
    job.requested_time = f[8] > 0 ? f[8] : job.run_time;
    if (job.run_time <= 0 || procs <= 0) {
      ++result.dropped;
      continue;
    }
    if (job.submit_time < 0) {
      result.errors.push_back({line_no, "negative submit time"});
      continue;
    }
    result.trace.jobs.push_back(std::move(job));
  }
  if (result.trace.jobs.empty()) {
    throw ParseError("trace '" + result.trace.name + "' contains no valid job");
  }
  sort_by_submit(result.trace.jobs);

  int widest = 0;
  for (const auto& job : result.trace.jobs) widest = std::max(widest, job.requested_procs);
  result.trace.total_procs = max_procs > 0 ? max_procs : (max_nodes > 0 ? max_nodes : widest);
  if (result.trace.total_procs < widest) {
    // Jobs wider than the declared machine cannot run; treat like other filtered jobs.
    const int cap = result.trace.total_procs;
    auto& jobs = result.trace.jobs;
    const auto before = jobs.size();
    std::erase_if(jobs, [cap](const Job& j) { return j.requested_procs > cap; });
    result.dropped += before - jobs.size();
    if (jobs.empty()) {
      throw ParseError("trace '" + result.trace.name + "' contains no valid job");
    }
  }
  return result;
}

inline SwfParseResult parse_swf_text(std::string_view text, std::string name = "swf") {
  std::istringstream in{std::string(text)};
  return parse_swf(in, std::move(name));
}

// Writes a trace as SWF v2.2. Unused fields are -1; the wait field carries
// the simulated wait when it is known.
inline void write_swf(const WorkloadTrace& trace, std::ostream& out) {
  out << "; Version: 2.2\n";
  out << "; Computer: " << (trace.name.empty() ? "unnamed" : trace.name) << "\n";
  out << "; MaxJobs: " << trace.jobs.size() << "\n";
  out << "; MaxRecords: " << trace.jobs.size() << "\n";
  out << "; MaxNodes: " << trace.total_procs << "\n";
  out << "; MaxProcs: " << trace.total_procs << "\n";
  for (const auto& job : trace.jobs) {
    out << fmt::format("{} {} {} {} {} -1 -1 {} {} -1 1 -1 -1 -1 -1 -1 -1 -1\n", job.id,
                       job.submit_time, job.wait_time ? *job.wait_time : -1.0,
                       job.run_time, job.requested_procs, job.requested_procs,
                       job.requested_time);
  }
}

inline std::string to_swf_text(const WorkloadTrace& trace) {
  std::ostringstream out;
  write_swf(trace, out);
  return out.str();
}

}  // namespace mars
