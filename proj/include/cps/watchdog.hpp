#pragma once

// Online anomaly monitor. It watches classified commands per session and
// raises an alarm at the first (or second) anomaly, after which the router
// blocks the session so no further chain of anomalies can build up.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cps/classify.hpp"

namespace cps {

struct TraceRecord {
  std::uint64_t seq = 0;
  std::string session_id;
  std::string card_id;
  CommandApdu command;
  ResponseApdu response;
  Classification verdict = Classification::CorrectTransition;
  std::optional<StepLabel> expected_step;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

enum class WatchdogPolicy { Disabled, BlockOnFirst, BlockOnSecond };

inline std::size_t anomaly_threshold(WatchdogPolicy policy) {
  switch (policy) {
    case WatchdogPolicy::Disabled: return 0;
    case WatchdogPolicy::BlockOnFirst: return 1;
    case WatchdogPolicy::BlockOnSecond: return 2;
  }
  return 0;
}

inline std::optional<WatchdogPolicy> parse_watchdog_policy(std::string_view text) {
  if (text == "off" || text == "disabled") return WatchdogPolicy::Disabled;
  if (text == "first") return WatchdogPolicy::BlockOnFirst;
  if (text == "second") return WatchdogPolicy::BlockOnSecond;
  return std::nullopt;
}

struct WatchdogAlarm {
  std::string session_id;
  std::uint64_t alarm_seq = 0;                // record that tripped the alarm
  std::vector<std::uint64_t> offending_seqs;  // the anomalies counted, in order
};

/// First alarm in the trace under `policy`, if any.
inline std::optional<WatchdogAlarm> watchdog_check(std::span<const TraceRecord> trace, WatchdogPolicy policy) {
  const std::size_t threshold = anomaly_threshold(policy);
  if (threshold == 0) return std::nullopt;
  std::map<std::string, std::vector<std::uint64_t>> seen;
  for (const auto& rec : trace) {
    if (rec.verdict != Classification::Anomaly) continue;
    auto& list = seen[rec.session_id];
    list.push_back(rec.seq);
    if (list.size() == threshold) return WatchdogAlarm{rec.session_id, rec.seq, list};
  }
  return std::nullopt;
}

}  // namespace cps
