#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cps/apdu.hpp"
#include "cps/program.hpp"

namespace cps {

enum class Classification {
  CorrectTransition,  // the session's expected step, accepted by the card
  DetectedError,      // the card returned an error status
  Anomaly,            // not the expected step, yet accepted by the card
};

inline std::string_view verdict_code(Classification c) {
  switch (c) {
    case Classification::CorrectTransition: return "OK";
    case Classification::DetectedError: return "ERR";
    case Classification::Anomaly: return "ANOM";
  }
  return "?";
}

inline std::optional<Classification> parse_verdict(std::string_view code) {
  if (code == "OK") return Classification::CorrectTransition;
  if (code == "ERR") return Classification::DetectedError;
  if (code == "ANOM") return Classification::Anomaly;
  return std::nullopt;
}

enum class SessionStatus { Running, Completed, TerminatedOnError, Blocked };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "Running";
    case SessionStatus::Completed: return "Completed";
    case SessionStatus::TerminatedOnError: return "TerminatedOnError";
    case SessionStatus::Blocked: return "Blocked";
  }
  return "?";
}

struct Session {
  std::string id;
  StraightLineProgram program;
  std::string target_card;
  std::size_t cursor = 0;
  SessionStatus status = SessionStatus::Running;
  std::size_t anomalies = 0;

  bool expects_step() const noexcept {
    return status == SessionStatus::Running && cursor < program.size();
  }
  std::optional<StepLabel> expected_label() const {
    if (!expects_step()) return std::nullopt;
    return program.steps[cursor].label;
  }
};

inline Session make_session(std::string id, StraightLineProgram program, std::string target_card) {
  Session s{std::move(id), std::move(program), std::move(target_card)};
  if (s.program.size() == 0) s.status = SessionStatus::Completed;
  return s;
}

/// Step of the session's program that `cmd` is globally legal for, if any.
/// Normally only the next step qualifies. Once an anomaly has occurred the
/// position within the program is uncertain, so a later step whose template
/// matches is accepted as well (forward only).
inline std::optional<std::size_t> legal_step(const Session& session, const CommandApdu& cmd) {
  if (!session.expects_step()) return std::nullopt;
  if (session.program.steps[session.cursor].command.matches(cmd)) return session.cursor;
  if (session.anomalies == 0) return std::nullopt;
  for (std::size_t k = session.cursor + 1; k < session.program.size(); ++k) {
    if (session.program.steps[k].command.matches(cmd)) return k;
  }
  return std::nullopt;
}

inline Classification classify(const Session& session, const CommandApdu& cmd, const ResponseApdu& response) {
  if (!response.ok()) return Classification::DetectedError;
  return legal_step(session, cmd) ? Classification::CorrectTransition : Classification::Anomaly;
}

/// Applies a verdict to the session. Completed and TerminatedOnError are
/// absorbing; the cursor only moves on a correct transition.
inline void advance(Session& session, const CommandApdu& cmd, Classification verdict) {
  switch (verdict) {
    case Classification::CorrectTransition:
      if (const auto k = legal_step(session, cmd)) {
        session.cursor = *k + 1;
        if (session.cursor == session.program.size()) session.status = SessionStatus::Completed;
      }
      break;
    case Classification::DetectedError:
      if (session.status == SessionStatus::Running) session.status = SessionStatus::TerminatedOnError;
      break;
    case Classification::Anomaly:
      ++session.anomalies;
      break;
  }
}

}  // namespace cps
