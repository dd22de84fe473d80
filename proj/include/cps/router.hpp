#pragma once

// The middleware: owns simulated cards and application sessions, routes each
// command to a card, classifies the outcome against the session's program and
// keeps one merged trace.
//
// Locking: each card has its own mutex held for the whole execute/classify/
// record step, so commands to one card form a single total order and their
// sequence numbers follow that order. Router bookkeeping (sessions, trace)
// sits behind a second mutex that is only ever taken inside a card lock.

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cps/card.hpp"
#include "cps/classify.hpp"
#include "cps/program.hpp"
#include "cps/watchdog.hpp"

namespace cps {

class UnknownCard : public Error {
 public:
  using Error::Error;
};

class UnknownSession : public Error {
 public:
  using Error::Error;
};

class SessionBlocked : public Error {
 public:
  using Error::Error;
};

/// Routing faults: sessions whose commands land on another card, and foreign
/// commands slipped into a session's command stream at given positions.
struct FaultConfig {
  std::map<std::string, std::string> misdirect;  // session id -> actual card id
  std::map<std::size_t, CommandApdu> injections;  // stream position -> command

  bool empty() const noexcept { return misdirect.empty() && injections.empty(); }
};

/// Text form:
///   misdirect <session> <card>
///   inject <position> <hex apdu>
inline FaultConfig parse_fault_config(std::istream& in) {
  FaultConfig faults;
  for (const auto& [line, text] : detail::logical_lines(in)) {
    const auto tok = detail::split_ws(text);
    if (tok.size() != 3) throw ConfigError("expected three fields", line);
    if (tok[0] == "misdirect") {
      faults.misdirect[tok[1]] = tok[2];
    } else if (tok[0] == "inject") {
      std::size_t pos = 0;
      try {
        pos = std::stoul(tok[1]);
      } catch (const std::logic_error&) {
        throw ConfigError("bad injection position '" + tok[1] + "'", line);
      }
      CommandApdu cmd;
      try {
        cmd = command_from_hex(tok[2]);
      } catch (const Error& e) {
        throw ConfigError(e.what(), line);
      }
      if (!faults.injections.emplace(pos, std::move(cmd)).second) {
        throw ConfigError("duplicate injection position " + tok[1], line);
      }
    } else {
      throw ConfigError("unknown directive '" + tok[0] + "'", line);
    }
  }
  return faults;
}

inline FaultConfig parse_fault_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_fault_config(in);
}

inline FaultConfig load_fault_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fault file '" + path + "'");
  return parse_fault_config(in);
}

class Router {
 public:
  using RecordObserver = std::function<void(const TraceRecord&)>;

  explicit Router(std::uint64_t seed = 0) : seed_(seed) {}

  Router(const Router&) = delete;
  Router& operator=(const Router&) = delete;

  std::uint64_t seed() const noexcept { return seed_; }

  /// Cards are seeded with the router seed plus their insertion ordinal.
  void add_card(const std::string& id, std::shared_ptr<const CardProfile> profile) {
    std::lock_guard lock(state_mu_);
    if (cards_.contains(id)) throw Error("card '" + id + "' already exists");
    const std::uint64_t card_seed = seed_ + card_order_.size();
    cards_.emplace(id, std::make_unique<Slot>(Card(std::move(profile), card_seed)));
    card_order_.push_back(id);
  }

  std::vector<std::string> card_ids() const {
    std::lock_guard lock(state_mu_);
    return card_order_;
  }

  const CardProfile& card_profile(const std::string& id) const { return slot(id).card.profile(); }

  /// Consistent copy of a card's state.
  CardState card_state(const std::string& id) const {
    auto& s = slot(id);
    std::lock_guard lock(s.mu);
    return s.card.snapshot();
  }

  template <class Fn>
  decltype(auto) with_card(const std::string& id, Fn&& fn) {
    auto& s = slot(id);
    std::lock_guard lock(s.mu);
    return std::forward<Fn>(fn)(s.card);
  }

  Bytes reset_card(const std::string& id) {
    auto& s = slot(id);
    std::lock_guard lock(s.mu);
    return s.card.reset();
  }

  /// The program's card type need not match the card's profile.
  std::string open_session(const StraightLineProgram& program, const std::string& card_id) {
    slot(card_id);  // throws UnknownCard
    std::lock_guard lock(state_mu_);
    std::string id = "s" + std::to_string(++session_counter_);
    sessions_.emplace(id, make_session(id, program, card_id));
    return id;
  }

  Session session(const std::string& id) const {
    std::lock_guard lock(state_mu_);
    return session_locked(id);
  }

  void set_watchdog(WatchdogPolicy policy) {
    std::lock_guard lock(state_mu_);
    watchdog_ = policy;
  }

  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

  /// Called for every new record while the card lock is held.
  void set_observer(RecordObserver observer) {
    std::lock_guard lock(state_mu_);
    observer_ = std::move(observer);
  }

  /// Delivers one command on behalf of a session and classifies the result
  /// against the session's program. Throws SessionBlocked when the watchdog
  /// has blocked the session; the command then never reaches a card.
  TraceRecord dispatch(const std::string& session_id, const CommandApdu& cmd, const FaultConfig& faults = {}) {
    std::string card_id;
    {
      std::lock_guard lock(state_mu_);
      const auto& s = session_locked(session_id);
      if (blocked(s)) {
        throw SessionBlocked("session " + session_id + " is blocked by the watchdog");
      }
      const auto it = faults.misdirect.find(session_id);
      card_id = it != faults.misdirect.end() ? it->second : s.target_card;
    }
    auto& card_slot = slot(card_id);
    std::lock_guard card_lock(card_slot.mu);
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    ResponseApdu response = card_slot.card.execute(cmd);

    std::lock_guard lock(state_mu_);
    auto& s = session_locked(session_id);
    TraceRecord rec{++seq_, session_id, card_id, cmd, std::move(response),
                    Classification::CorrectTransition, s.expected_label()};
    rec.verdict = classify(s, cmd, rec.response);
    advance(s, cmd, rec.verdict);
    if (s.status == SessionStatus::Running && blocked(s)) s.status = SessionStatus::Blocked;
    trace_.push_back(rec);
    if (observer_) observer_(rec);
    return rec;
  }

  /// Runs a session's remaining steps with its default bindings, slipping in
  /// the injected commands at their stream positions. Injections positioned
  /// past the program's end follow it in order. Stops early on an error or
  /// when the watchdog blocks the session.
  std::vector<TraceRecord> run_program(const std::string& session_id, const FaultConfig& faults = {}) {
    std::vector<TraceRecord> out;
    auto next_injection = faults.injections.begin();
    for (std::size_t position = 0;; ++position) {
      const Session s = session(session_id);
      if (s.status == SessionStatus::Blocked || s.status == SessionStatus::TerminatedOnError) break;
      CommandApdu cmd;
      if (next_injection != faults.injections.end() &&
          (next_injection->first <= position || s.status != SessionStatus::Running)) {
        cmd = next_injection->second;
        ++next_injection;
      } else if (s.status == SessionStatus::Running) {
        cmd = instantiate_step(s.program, s.cursor, default_bindings(s.program, s.cursor, seed_));
      } else {
        break;
      }
      try {
        out.push_back(dispatch(session_id, cmd, faults));
      } catch (const SessionBlocked&) {
        break;
      }
    }
    return out;
  }

  std::vector<TraceRecord> trace() const {
    std::lock_guard lock(state_mu_);
    return trace_;
  }

 private:
  struct Slot {
    explicit Slot(Card c) : card(std::move(c)) {}
    Card card;
    std::mutex mu;
  };

  Slot& slot(const std::string& id) const {
    std::lock_guard lock(state_mu_);
    const auto it = cards_.find(id);
    if (it == cards_.end()) throw UnknownCard("unknown card '" + id + "'");
    return *it->second;
  }

  // A completed session keeps its status but is refused further commands
  // once it has reached the watchdog threshold.
  bool blocked(const Session& s) const {
    const std::size_t threshold = anomaly_threshold(watchdog_);
    return s.status == SessionStatus::Blocked || (threshold > 0 && s.anomalies >= threshold);
  }

  Session& session_locked(const std::string& id) {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownSession("unknown session '" + id + "'");
    return it->second;
  }
  const Session& session_locked(const std::string& id) const {
    return const_cast<Router*>(this)->session_locked(id);
  }

  std::uint64_t seed_;
  std::chrono::milliseconds latency_{0};
  mutable std::mutex state_mu_;
  std::map<std::string, std::unique_ptr<Slot>> cards_;
  std::vector<std::string> card_order_;
  std::map<std::string, Session> sessions_;
  std::uint64_t session_counter_ = 0;
  std::uint64_t seq_ = 0;
  std::vector<TraceRecord> trace_;
  WatchdogPolicy watchdog_ = WatchdogPolicy::Disabled;
  RecordObserver observer_;
};

}  // namespace cps
