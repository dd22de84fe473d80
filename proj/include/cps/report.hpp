#pragma once

// Exploration reports: a human summary followed by a key=value block that
// parse_report() reads back. Wall time appears only in the summary so the
// machine block is reproducible.

#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>

#include "cps/explorer.hpp"
#include "cps/profile_config.hpp"
#include "cps/trace.hpp"

namespace cps {

inline constexpr std::size_t kSummaryScheduleLimit = 20;

inline std::string schedule_text(const Schedule& s) { return s.tags.empty() ? "(empty)" : s.tags; }

inline std::string format_report(const ExplorationReport& r) {
  std::ostringstream out;
  out << "exploration " << r.program_a << " x " << r.program_b << " on " << r.profile << " (" << r.strategy
      << ")\n";
  out << "  schedules: " << r.total << " total, " << r.visited << " visited\n";
  out << "  CompletedClean:         " << r.completed_clean << '\n';
  out << "  CompletedWithAnomalies: " << r.completed_with_anomalies << '\n';
  out << "  TerminatedOnError:      " << r.terminated_on_error << '\n';
  if (!r.anomalous.empty()) {
    out << "  anomalous-complete schedules:\n";
    for (std::size_t i = 0; i < r.anomalous.size() && i < kSummaryScheduleLimit; ++i) {
      out << "    " << schedule_text(r.anomalous[i].schedule) << "  (" << r.anomalous[i].anomalies
          << " anomalies)\n";
    }
    if (r.anomalous.size() > kSummaryScheduleLimit) {
      out << "    ... " << r.anomalous.size() - kSummaryScheduleLimit << " more\n";
    }
  }
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_seconds);
  out << "  wall time: " << wall << " s\n";
  out << "#BEGIN-REPORT\n";
  out << "strategy=" << r.strategy << '\n';
  out << "program_a=" << r.program_a << '\n';
  out << "program_b=" << r.program_b << '\n';
  out << "profile=" << r.profile << '\n';
  out << "total=" << r.total << '\n';
  out << "visited=" << r.visited << '\n';
  out << "completed_clean=" << r.completed_clean << '\n';
  out << "completed_with_anomalies=" << r.completed_with_anomalies << '\n';
  out << "terminated_on_error=" << r.terminated_on_error << '\n';
  for (const auto& a : r.anomalous) out << "anomalous=" << a.schedule.tags << ':' << a.anomalies << '\n';
  out << "#END-REPORT\n";
  return out.str();
}

/// Writes the report to `path` and returns the text.
inline std::string emit_report(const ExplorationReport& r, const std::string& path) {
  const std::string text = format_report(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())).flush()) {
    throw Error("cannot write report '" + path + "'");
  }
  return text;
}

/// Reads the machine block; the summary above it is ignored.
inline ExplorationReport parse_report(std::istream& in) {
  ExplorationReport r;
  std::string line;
  std::size_t lineno = 0;
  bool inside = false, ended = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!inside) {
      inside = line == "#BEGIN-REPORT";
      continue;
    }
    if (line == "#END-REPORT") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value", lineno);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto number = [&]() -> std::uint64_t {
      try {
        std::size_t used = 0;
        const auto v = std::stoull(value, &used);
        if (used == value.size()) return v;
      } catch (const std::logic_error&) {
      }
      throw ConfigError("bad number for " + key, lineno);
    };
    if (key == "strategy") r.strategy = value;
    else if (key == "program_a") r.program_a = value;
    else if (key == "program_b") r.program_b = value;
    else if (key == "profile") r.profile = value;
    else if (key == "total") r.total = number();
    else if (key == "visited") r.visited = number();
    else if (key == "completed_clean") r.completed_clean = number();
    else if (key == "completed_with_anomalies") r.completed_with_anomalies = number();
    else if (key == "terminated_on_error") r.terminated_on_error = number();
    else if (key == "anomalous") {
      const auto colon = value.rfind(':');
      if (colon == std::string::npos) throw ConfigError("expected schedule:count", lineno);
      const std::string tags = value.substr(0, colon);
      if (tags.find_first_not_of("AB") != std::string::npos) throw ConfigError("bad schedule '" + tags + "'", lineno);
      try {
        r.anomalous.push_back({Schedule{tags}, std::stoul(value.substr(colon + 1))});
      } catch (const std::logic_error&) {
        throw ConfigError("bad anomaly count", lineno);
      }
    } else {
      throw ConfigError("unknown key '" + key + "'", lineno);
    }
  }
  if (!inside) throw Error("no #BEGIN-REPORT block");
  if (!ended) throw ConfigError("missing #END-REPORT", lineno);
  return r;
}

inline ExplorationReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report '" + path + "'");
  return parse_report(in);
}

/// Verdict tally of a trace file.
inline std::string format_trace_summary(const TraceFile& t) {
  std::size_t ok = 0, err = 0, anom = 0;
  for (const auto& r : t.records) {
    switch (r.verdict) {
      case Classification::CorrectTransition: ++ok; break;
      case Classification::DetectedError: ++err; break;
      case Classification::Anomaly: ++anom; break;
    }
  }
  std::ostringstream out;
  out << "trace seed=" << t.seed << ", " << t.records.size() << " records: " << ok << " OK, " << err << " ERR, "
      << anom << " ANOM\n";
  return out.str();
}

inline std::string format_sweep(const SweepReport& r) {
  std::ostringstream out;
  out << "challenge insertion sweep into " << r.victim << " on " << r.profile << '\n';
  for (const auto& p : r.points) {
    out << "  pair after " << p.position << " victim steps: " << describe(p.terminal) << ", signatures=" << p.signatures
        << '\n';
  }
  out << "  all points complete with anomalies: " << (r.all_anomalous_complete ? "yes" : "no") << '\n';
  return out.str();
}

}  // namespace cps
