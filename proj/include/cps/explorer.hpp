#pragma once

// Interleavings of two straight-line programs on one card.
//
// A schedule is a word over {A, B} with one letter per step; position t
// dispatches the next unconsumed step of the tagged program. All commands are
// classified against the victim session: the program whose card type matches
// the card (program A when neither or both match). A run stops at the first
// detected error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cps/card.hpp"
#include "cps/classify.hpp"
#include "cps/program.hpp"
#include "cps/router.hpp"

namespace cps {

using BigInt = boost::multiprecision::cpp_int;

struct Schedule {
  std::string tags;  // 'A' / 'B'

  std::size_t count(char tag) const { return static_cast<std::size_t>(std::ranges::count(tags, tag)); }
  friend auto operator<=>(const Schedule&, const Schedule&) = default;
};

/// Lexicographic stream (A < B) of every merge of l A-steps and k B-steps.
class ScheduleStream {
 public:
  ScheduleStream(std::size_t l, std::size_t k) : current_(std::string(l, 'A') + std::string(k, 'B')) {}

  std::optional<Schedule> next() {
    if (done_) return std::nullopt;
    Schedule out{current_};
    done_ = !std::next_permutation(current_.begin(), current_.end());
    return out;
  }

 private:
  std::string current_;
  bool done_ = false;
};

inline ScheduleStream enumerate_schedules(std::size_t l, std::size_t k) { return ScheduleStream(l, k); }

/// Exact binomial coefficient; throws std::overflow_error beyond 64 bits.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;  // exact: acc is C(n-k+i, i) after this step
    if (acc > UINT64_MAX) throw std::overflow_error("binomial coefficient exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(acc);
}

/// Brute-force test count for two programs of l and k steps when every input
/// command carries `bits_per_command` free bits: C(l+k, l) * 2^bits.
inline BigInt search_space_size(std::uint64_t l, std::uint64_t k, std::uint64_t bits_per_command) {
  BigInt merges = 1;
  const std::uint64_t r = std::min(l, k);
  for (std::uint64_t i = 1; i <= r; ++i) merges = merges * (l + k - r + i) / i;
  return merges << static_cast<unsigned>(bits_per_command);
}

// ---------------------------------------------------------------------------
// Outcomes

enum class TerminalKind { CompletedClean, CompletedWithAnomalies, TerminatedOnError, Blocked, Incomplete };

inline std::string_view to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::CompletedClean: return "CompletedClean";
    case TerminalKind::CompletedWithAnomalies: return "CompletedWithAnomalies";
    case TerminalKind::TerminatedOnError: return "TerminatedOnError";
    case TerminalKind::Blocked: return "Blocked";
    case TerminalKind::Incomplete: return "Incomplete";
  }
  return "?";
}

struct Terminal {
  TerminalKind kind = TerminalKind::CompletedClean;
  std::size_t anomalies = 0;  // Anomaly verdicts in the run
  std::size_t position = 0;   // index of the failing command for TerminatedOnError

  friend bool operator==(const Terminal&, const Terminal&) = default;
};

inline std::string describe(const Terminal& t) {
  switch (t.kind) {
    case TerminalKind::CompletedWithAnomalies: return "CompletedWithAnomalies(" + std::to_string(t.anomalies) + ")";
    case TerminalKind::TerminatedOnError: return "TerminatedOnError(at " + std::to_string(t.position) + ")";
    default: return std::string(to_string(t.kind));
  }
}

struct SequenceResult {
  std::vector<TraceRecord> trace;
  Terminal terminal;
  CardState final_state;
  std::string victim_program;
};

/// Runs concrete commands against a fresh card, classifying each against a
/// session of `victim` opened on that card. Stops at the first error or when
/// the watchdog blocks the session.
inline SequenceResult run_sequence(const std::vector<CommandApdu>& commands, const StraightLineProgram& victim,
                                   std::shared_ptr<const CardProfile> profile, std::uint64_t seed,
                                   WatchdogPolicy watchdog = WatchdogPolicy::Disabled) {
  Router router(seed);
  router.add_card("card", std::move(profile));
  router.set_watchdog(watchdog);
  const std::string sid = router.open_session(victim, "card");
  SequenceResult out;
  out.victim_program = victim.id;
  std::optional<Terminal> stop;
  for (std::size_t t = 0; t < commands.size() && !stop; ++t) {
    try {
      const auto rec = router.dispatch(sid, commands[t]);
      if (rec.verdict == Classification::DetectedError) stop = Terminal{TerminalKind::TerminatedOnError, 0, t};
    } catch (const SessionBlocked&) {
      stop = Terminal{TerminalKind::Blocked, 0, t};
    }
  }
  out.trace = router.trace();
  const auto anomalies = static_cast<std::size_t>(std::ranges::count_if(
      out.trace, [](const TraceRecord& r) { return r.verdict == Classification::Anomaly; }));
  const Session s = router.session(sid);
  if (stop) {
    out.terminal = *stop;
  } else if (s.status == SessionStatus::Blocked) {
    out.terminal = Terminal{TerminalKind::Blocked, 0, commands.size()};
  } else if (s.status == SessionStatus::Completed) {
    out.terminal = Terminal{anomalies == 0 ? TerminalKind::CompletedClean : TerminalKind::CompletedWithAnomalies};
  } else {
    out.terminal = Terminal{TerminalKind::Incomplete};
  }
  out.terminal.anomalies = anomalies;
  out.final_state = router.card_state("card");
  return out;
}

/// Picks the victim: the program certified for this card type.
inline bool victim_is_a(const StraightLineProgram& a, const StraightLineProgram& b, const CardProfile& profile) {
  return a.card_type == profile.name || b.card_type != profile.name;
}

inline std::vector<CommandApdu> schedule_commands(const Schedule& schedule, const StraightLineProgram& a,
                                                  const StraightLineProgram& b, std::uint64_t seed) {
  if (schedule.count('A') != a.size() || schedule.count('B') != b.size() ||
      schedule.tags.size() != a.size() + b.size()) {
    throw Error("schedule '" + schedule.tags + "' does not merge programs of " + std::to_string(a.size()) +
                " and " + std::to_string(b.size()) + " steps");
  }
  std::vector<CommandApdu> out;
  std::size_t ia = 0, ib = 0;
  for (char tag : schedule.tags) {
    const auto& p = tag == 'A' ? a : b;
    std::size_t& i = tag == 'A' ? ia : ib;
    out.push_back(instantiate_step(p, i, default_bindings(p, i, seed)));
    ++i;
  }
  return out;
}

struct ScheduleResult {
  Schedule schedule;
  std::vector<TraceRecord> trace;
  Terminal terminal;
  bool card_damaged = false;
  std::uint64_t signatures = 0;
};

inline ScheduleResult run_schedule(const Schedule& schedule, const StraightLineProgram& a,
                                   const StraightLineProgram& b, std::shared_ptr<const CardProfile> profile,
                                   std::uint64_t seed) {
  const auto& victim = victim_is_a(a, b, *profile) ? a : b;
  auto run = run_sequence(schedule_commands(schedule, a, b, seed), victim, std::move(profile), seed);
  return ScheduleResult{schedule, std::move(run.trace), run.terminal, run.final_state.seo_destroyed,
                        run.final_state.signatures_issued};
}

// ---------------------------------------------------------------------------
// Exploration

enum class Strategy { Exhaustive, PruneOnError, MemoizedByState };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Exhaustive: return "exhaustive";
    case Strategy::PruneOnError: return "prune";
    case Strategy::MemoizedByState: return "memo";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view text) {
  if (text == "exhaustive") return Strategy::Exhaustive;
  if (text == "prune" || text == "prune-on-error") return Strategy::PruneOnError;
  if (text == "memo" || text == "memoized") return Strategy::MemoizedByState;
  return std::nullopt;
}

class CapExceeded : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kDefaultExplorationCap = 22;

struct AnomalousSchedule {
  Schedule schedule;
  std::size_t anomalies = 0;
  friend auto operator<=>(const AnomalousSchedule&, const AnomalousSchedule&) = default;
};

/// Class counts cover every schedule, including those a strategy resolved
/// without executing them; `visited` counts executed runs only.
struct ExplorationReport {
  std::string strategy;
  std::string program_a;
  std::string program_b;
  std::string profile;
  std::uint64_t total = 0;
  std::uint64_t visited = 0;
  std::uint64_t completed_clean = 0;
  std::uint64_t completed_with_anomalies = 0;
  std::uint64_t terminated_on_error = 0;
  std::vector<AnomalousSchedule> anomalous;  // sorted
  double wall_seconds = 0;

  bool same_outcomes(const ExplorationReport& o) const {
    return total == o.total && completed_clean == o.completed_clean &&
           completed_with_anomalies == o.completed_with_anomalies && terminated_on_error == o.terminated_on_error &&
           anomalous == o.anomalous;
  }
};

namespace detail {

struct SessionMark {
  std::size_t cursor;
  SessionStatus status;
  std::size_t anomalies;
};

// Shared machinery for the depth-first strategies: one card and one victim
// session, rewound with snapshots instead of replaying prefixes.
class ScheduleTree {
 public:
  ScheduleTree(const StraightLineProgram& a, const StraightLineProgram& b,
               std::shared_ptr<const CardProfile> profile, std::uint64_t seed)
      : l_(a.size()), k_(b.size()), card_(profile, seed),
        session_(make_session("s1", victim_is_a(a, b, *profile) ? a : b, "card")) {
    for (std::size_t i = 0; i < a.size(); ++i) cmds_a_.push_back(instantiate_step(a, i, default_bindings(a, i, seed)));
    for (std::size_t i = 0; i < b.size(); ++i) cmds_b_.push_back(instantiate_step(b, i, default_bindings(b, i, seed)));
  }

  std::size_t l() const { return l_; }
  std::size_t k() const { return k_; }
  const Session& session() const { return session_; }
  const CardState& card_state() const { return card_.state(); }

  Classification step(char tag, std::size_t index) {
    const auto& cmd = tag == 'A' ? cmds_a_[index] : cmds_b_[index];
    const auto resp = card_.execute(cmd);
    const auto v = classify(session_, cmd, resp);
    advance(session_, cmd, v);
    return v;
  }

  std::pair<CardState, SessionMark> mark() const {
    return {card_.snapshot(), {session_.cursor, session_.status, session_.anomalies}};
  }
  void rewind(const std::pair<CardState, SessionMark>& m) {
    card_.restore_state(m.first);
    session_.cursor = m.second.cursor;
    session_.status = m.second.status;
    session_.anomalies = m.second.anomalies;
  }

 private:
  std::size_t l_, k_;
  Card card_;
  Session session_;
  std::vector<CommandApdu> cmds_a_, cmds_b_;
};

inline std::string state_key(const CardState& s, const Session& session, std::size_t ia, std::size_t ib) {
  std::string key;
  auto put = [&key](std::uint64_t v) { key.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(ia);
  put(ib);
  put(session.cursor);
  put(static_cast<std::uint64_t>(session.status));
  put(session.anomalies > 0 ? 1 : 0);
  put(static_cast<std::uint64_t>(s.current_dir));
  put((s.df_opened ? 1u : 0u) | (s.se_restored ? 2u : 0u) | (s.pin_verified ? 4u : 0u) |
      (s.seo_destroyed ? 8u : 0u) | (s.key_selected ? 16u : 0u) | (s.card_challenge ? 32u : 0u) |
      (s.host_challenge ? 64u : 0u));
  put(s.key_selected.value_or(0));
  for (const auto& c : {s.card_challenge, s.host_challenge}) {
    if (c) key.append(c->begin(), c->end());
  }
  put(s.signatures_issued);
  put(s.rng_draws);
  return key;
}

struct Counts {
  std::uint64_t clean = 0, with_anomalies = 0, errors = 0, visited = 0;
  std::vector<AnomalousSchedule> anomalous;
};

inline void record_leaf(const Session& s, const std::string& tags, Counts& c) {
  if (s.status != SessionStatus::Completed) {
    throw std::logic_error("victim session incomplete at end of schedule " + tags);
  }
  if (s.anomalies == 0) {
    ++c.clean;
  } else {
    ++c.with_anomalies;
    c.anomalous.push_back({Schedule{tags}, s.anomalies});
  }
}

inline void prune_dfs(ScheduleTree& tree, std::size_t ia, std::size_t ib, std::string& prefix, Counts& c) {
  if (ia == tree.l() && ib == tree.k()) {
    ++c.visited;
    record_leaf(tree.session(), prefix, c);
    return;
  }
  for (char tag : {'A', 'B'}) {
    const bool is_a = tag == 'A';
    if ((is_a && ia == tree.l()) || (!is_a && ib == tree.k())) continue;
    const auto m = tree.mark();
    prefix.push_back(tag);
    const auto v = tree.step(tag, is_a ? ia : ib);
    const std::size_t na = ia + (is_a ? 1 : 0), nb = ib + (is_a ? 0 : 1);
    if (v == Classification::DetectedError) {
      ++c.visited;
      c.errors += binomial(tree.l() - na + tree.k() - nb, tree.l() - na);
    } else {
      prune_dfs(tree, na, nb, prefix, c);
    }
    prefix.pop_back();
    tree.rewind(m);
  }
}

// Outcomes of all completions below one node, relative to that node.
struct Continuations {
  std::uint64_t errors = 0;
  std::vector<std::pair<std::string, std::size_t>> completed;  // suffix, anomalies added below
};

inline const Continuations& memo_dfs(ScheduleTree& tree, std::size_t ia, std::size_t ib,
                                     std::unordered_map<std::string, Continuations>& memo, std::uint64_t& visited) {
  const std::string key = state_key(tree.card_state(), tree.session(), ia, ib);
  if (const auto it = memo.find(key); it != memo.end()) return it->second;
  Continuations out;
  if (ia == tree.l() && ib == tree.k()) {
    ++visited;
    if (tree.session().status != SessionStatus::Completed) {
      throw std::logic_error("victim session incomplete at end of schedule");
    }
    out.completed.emplace_back("", 0);
  }
  for (char tag : {'A', 'B'}) {
    const bool is_a = tag == 'A';
    if ((is_a && ia == tree.l()) || (!is_a && ib == tree.k())) continue;
    const auto m = tree.mark();
    const std::size_t before = tree.session().anomalies;
    const auto v = tree.step(tag, is_a ? ia : ib);
    const std::size_t na = ia + (is_a ? 1 : 0), nb = ib + (is_a ? 0 : 1);
    if (v == Classification::DetectedError) {
      ++visited;
      out.errors += binomial(tree.l() - na + tree.k() - nb, tree.l() - na);
    } else {
      const std::size_t here = tree.session().anomalies - before;
      const auto& child = memo_dfs(tree, na, nb, memo, visited);
      out.errors += child.errors;
      for (const auto& [suffix, added] : child.completed) out.completed.emplace_back(tag + suffix, added + here);
    }
    tree.rewind(m);
  }
  return memo.emplace(key, std::move(out)).first->second;
}

}  // namespace detail

inline ExplorationReport explore(const StraightLineProgram& a, const StraightLineProgram& b,
                                 std::shared_ptr<const CardProfile> profile, Strategy strategy, std::uint64_t seed,
                                 std::size_t cap = kDefaultExplorationCap) {
  if (a.size() + b.size() > cap) {
    throw CapExceeded("programs of " + std::to_string(a.size()) + " + " + std::to_string(b.size()) +
                      " steps exceed the exploration cap of " + std::to_string(cap));
  }
  const auto started = std::chrono::steady_clock::now();
  ExplorationReport report;
  report.strategy = std::string(to_string(strategy));
  report.program_a = a.id;
  report.program_b = b.id;
  report.profile = profile->name;
  report.total = binomial(a.size() + b.size(), a.size());

  switch (strategy) {
    case Strategy::Exhaustive: {
      auto stream = enumerate_schedules(a.size(), b.size());
      while (auto s = stream.next()) {
        const auto r = run_schedule(*s, a, b, profile, seed);
        ++report.visited;
        switch (r.terminal.kind) {
          case TerminalKind::CompletedClean: ++report.completed_clean; break;
          case TerminalKind::CompletedWithAnomalies:
            ++report.completed_with_anomalies;
            report.anomalous.push_back({*s, r.terminal.anomalies});
            break;
          case TerminalKind::TerminatedOnError: ++report.terminated_on_error; break;
          default: throw std::logic_error("unexpected terminal " + describe(r.terminal));
        }
      }
      break;
    }
    case Strategy::PruneOnError: {
      detail::ScheduleTree tree(a, b, profile, seed);
      detail::Counts c;
      std::string prefix;
      detail::prune_dfs(tree, 0, 0, prefix, c);
      report.visited = c.visited;
      report.completed_clean = c.clean;
      report.completed_with_anomalies = c.with_anomalies;
      report.terminated_on_error = c.errors;
      report.anomalous = std::move(c.anomalous);
      break;
    }
    case Strategy::MemoizedByState: {
      detail::ScheduleTree tree(a, b, profile, seed);
      std::unordered_map<std::string, detail::Continuations> memo;
      const auto& root = detail::memo_dfs(tree, 0, 0, memo, report.visited);
      report.terminated_on_error = root.errors;
      for (const auto& [tags, anomalies] : root.completed) {
        if (anomalies == 0) {
          ++report.completed_clean;
        } else {
          ++report.completed_with_anomalies;
          report.anomalous.push_back({Schedule{tags}, anomalies});
        }
      }
      break;
    }
  }
  std::ranges::sort(report.anomalous);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------
// Targeted studies

/// One copy of `base` per position p = 1..n, with `loop_cmd` inserted after
/// the first p commands.
inline std::vector<std::vector<CommandApdu>> loopback_variants(const std::vector<CommandApdu>& base,
                                                               const CommandApdu& loop_cmd) {
  std::vector<std::vector<CommandApdu>> out;
  for (std::size_t p = 1; p <= base.size(); ++p) {
    std::vector<CommandApdu> v(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(p));
    v.push_back(loop_cmd);
    v.insert(v.end(), base.begin() + static_cast<std::ptrdiff_t>(p), base.end());
    out.push_back(std::move(v));
  }
  return out;
}

struct SweepPoint {
  std::size_t position = 0;  // number of victim steps before the inserted pair
  Terminal terminal;
  std::uint64_t signatures = 0;
};

struct SweepReport {
  std::string victim;
  std::string profile;
  std::vector<SweepPoint> points;
  bool all_anomalous_complete = false;  // every point CompletedWithAnomalies(pair size)
};

/// Inserts the foreign command pair as a block before each victim step and
/// after the last one.
inline SweepReport challenge_insertion_sweep(const StraightLineProgram& victim, const StraightLineProgram& pair,
                                             std::shared_ptr<const CardProfile> profile, std::uint64_t seed) {
  SweepReport report{victim.id, profile->name, {}, true};
  for (std::size_t p = 0; p <= victim.size(); ++p) {
    Schedule s{std::string(p, 'A') + std::string(pair.size(), 'B') + std::string(victim.size() - p, 'A')};
    const auto r = run_schedule(s, victim, pair, profile, seed);
    report.points.push_back({p, r.terminal, r.signatures});
    if (r.terminal.kind != TerminalKind::CompletedWithAnomalies || r.terminal.anomalies != pair.size()) {
      report.all_anomalous_complete = false;
    }
  }
  return report;
}

}  // namespace cps
