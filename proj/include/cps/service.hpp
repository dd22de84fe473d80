#pragma once

// Line protocol shared by the TCP daemon and command files.
//
//   RESET <card>                   -> OK <reset hex>
//   APDU <card> <hex>              -> OK <data hex> <SW>
//   STEP <card> <program> <step>   -> OK <data hex> <SW>
//   STATUS <card>                  -> OK <state summary>
//   QUIT                           -> OK BYE (connection closes)
//
// Failures are replies too: ERR NOCARD, ERR SYNTAX, ERR BADHEX, ERR BLOCKED.
// Every card has a session of its profile's own program; APDU and STEP
// commands are classified against it. RESET opens a fresh one.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cps/router.hpp"
#include "cps/trace.hpp"

namespace cps {

inline constexpr std::size_t kMaxLineLength = 4096;

struct Reply {
  std::string text;
  bool close = false;
};

struct ServiceConfig {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> cards;  // id, profile name or path
  WatchdogPolicy watchdog = WatchdogPolicy::Disabled;
  std::chrono::milliseconds latency{0};
};

class Service {
 public:
  explicit Service(ServiceConfig config) : config_(std::move(config)), router_(config_.seed) {
    router_.set_watchdog(config_.watchdog);
    router_.set_latency(config_.latency);
    for (const auto& [id, profile] : config_.cards) {
      router_.add_card(id, resolve_profile(profile));
    }
    for (const auto& [id, profile] : config_.cards) open_native(id);
  }

  Router& router() { return router_; }
  const ServiceConfig& config() const { return config_; }

  /// Card list as recorded in trace headers (profile names, not paths).
  std::vector<std::pair<std::string, std::string>> card_list() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [id, unused] : config_.cards) out.emplace_back(id, router_.card_profile(id).name);
    return out;
  }

  /// Records every classified command into `writer` (which must outlive this).
  void attach_trace(TraceWriter& writer) {
    router_.set_observer([&writer](const TraceRecord& r) { writer.append(r); });
  }

  std::string native_session(const std::string& card) const {
    std::lock_guard lock(mu_);
    return native_.at(card);
  }

  Reply handle_line(std::string_view line) {
    if (line.size() > kMaxLineLength) return {"ERR SYNTAX line exceeds 4096 bytes"};
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) return {"ERR SYNTAX empty line"};
    const std::string& verb = tok[0];
    try {
      if (verb == "QUIT") {
        if (tok.size() != 1) return {"ERR SYNTAX usage: QUIT"};
        return {"OK BYE", true};
      }
      if (verb == "RESET") {
        if (tok.size() != 2) return {"ERR SYNTAX usage: RESET <card>"};
        const Bytes atr = router_.reset_card(tok[1]);
        open_native(tok[1]);
        return {"OK " + hex_format(atr)};
      }
      if (verb == "APDU") {
        if (tok.size() != 3) return {"ERR SYNTAX usage: APDU <card> <hex>"};
        const std::string sid = session_for(tok[1]);
        CommandApdu cmd;
        try {
          cmd = command_from_hex(tok[2]);
        } catch (const Error& e) {
          return {std::string("ERR BADHEX ") + e.what()};
        }
        return execute(sid, cmd);
      }
      if (verb == "STEP") {
        if (tok.size() != 4) return {"ERR SYNTAX usage: STEP <card> <program> <step>"};
        const std::string sid = session_for(tok[1]);
        const auto* program = builtin_program(tok[2]);
        if (program == nullptr) return {"ERR SYNTAX unknown program " + tok[2]};
        const auto idx = program->find_step(tok[3]);
        if (!idx) return {"ERR SYNTAX unknown step " + tok[3]};
        return execute(sid, instantiate_step(*program, *idx, default_bindings(*program, *idx, config_.seed)));
      }
      if (verb == "STATUS") {
        if (tok.size() != 2) return {"ERR SYNTAX usage: STATUS <card>"};
        const std::string sid = session_for(tok[1]);
        return {"OK " + status_line(tok[1], router_.card_state(tok[1]), router_.session(sid))};
      }
    } catch (const UnknownCard&) {
      return {"ERR NOCARD " + tok[1]};
    } catch (const Error& e) {
      return {std::string("ERR SYNTAX ") + e.what()};
    }
    return {"ERR SYNTAX unknown verb"};
  }

 private:
  void open_native(const std::string& card) {
    const auto& profile = router_.card_profile(card);
    const auto* native = native_program(profile.name);
    StraightLineProgram program = native ? *native : StraightLineProgram{"NONE", profile.name, {}};
    const std::string sid = router_.open_session(program, card);
    std::lock_guard lock(mu_);
    native_[card] = sid;
  }

  std::string session_for(const std::string& card) const {
    std::lock_guard lock(mu_);
    const auto it = native_.find(card);
    if (it == native_.end()) throw UnknownCard(card);
    return it->second;
  }

  Reply execute(const std::string& sid, const CommandApdu& cmd) {
    try {
      const auto rec = router_.dispatch(sid, cmd);
      return {"OK " + hex_format(rec.response.data) + ' ' + status_hex(rec.response)};
    } catch (const SessionBlocked& e) {
      return {std::string("ERR BLOCKED ") + e.what()};
    }
  }

  static std::string status_line(const std::string& card, const CardState& s, const Session& session) {
    std::string out = "card=" + card;
    out += std::string(" dir=") + (s.current_dir == Directory::MasterFile ? "MF" : "DF");
    out += std::string(" se=") + (s.se_restored ? "restored" : "none");
    out += " key=" + (s.key_selected ? hex_format(*s.key_selected) : std::string("-"));
    out += std::string(" pin=") + (s.pin_verified ? "verified" : "no");
    out += std::string(" challenges=") + (s.card_challenge ? "card" : "-") + '/' + (s.host_challenge ? "host" : "-");
    out += std::string(" seo=") + (s.seo_destroyed ? "destroyed" : "intact");
    out += " signatures=" + std::to_string(s.signatures_issued);
    out += " session=" + session.id + " program=" + session.program.id;
    out += " cursor=" + std::to_string(session.cursor) + '/' + std::to_string(session.program.size());
    out += " status=" + std::string(to_string(session.status));
    out += " anomalies=" + std::to_string(session.anomalies);
    return out;
  }

  ServiceConfig config_;
  Router router_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> native_;  // card -> session id
};

// ---------------------------------------------------------------------------
// Command files: protocol lines preceded by setup directives.
//
//   @seed 7
//   @card c1 cardos
//   @watchdog first
//   STEP c1 P2 MF
//   APDU c1 0084000008

struct CommandFileRun {
  std::unique_ptr<Service> service;
  std::vector<std::pair<std::string, Reply>> exchanges;  // request, reply
};

struct CommandFile {
  ServiceConfig config;
  std::vector<std::pair<std::size_t, std::string>> lines;  // line number, request
};

inline CommandFile parse_command_file(std::istream& in) {
  CommandFile file;
  bool body = false;
  for (const auto& [line, text] : detail::logical_lines(in)) {
    const auto tok = detail::split_ws(text);
    if (tok[0].starts_with('@')) {
      if (body) throw ConfigError("directive after the first command", line);
      if (tok[0] == "@seed" && tok.size() == 2) {
        try {
          file.config.seed = std::stoull(tok[1]);
        } catch (const std::logic_error&) {
          throw ConfigError("bad seed '" + tok[1] + "'", line);
        }
      } else if (tok[0] == "@card" && tok.size() == 3) {
        file.config.cards.emplace_back(tok[1], tok[2]);
      } else if (tok[0] == "@watchdog" && tok.size() == 2) {
        const auto policy = parse_watchdog_policy(tok[1]);
        if (!policy) throw ConfigError("bad watchdog policy '" + tok[1] + "'", line);
        file.config.watchdog = *policy;
      } else {
        throw ConfigError("bad directive '" + text + "'", line);
      }
    } else {
      body = true;
      file.lines.emplace_back(line, text);
    }
  }
  return file;
}

inline CommandFile load_command_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open command file '" + path + "'");
  return parse_command_file(in);
}

/// Runs a command file. `trace_path`, when set, receives the trace as it is
/// produced, exactly as the daemon would write it.
inline CommandFileRun run_command_file(const CommandFile& file, const std::string& trace_path = {}) {
  CommandFileRun run;
  run.service = std::make_unique<Service>(file.config);
  std::unique_ptr<TraceWriter> writer;
  if (!trace_path.empty()) {
    writer = std::make_unique<TraceWriter>(trace_path, file.config.seed, run.service->card_list());
    run.service->attach_trace(*writer);
  }
  for (const auto& [line, text] : file.lines) {
    auto reply = run.service->handle_line(text);
    const bool close = reply.close;
    run.exchanges.emplace_back(text, std::move(reply));
    if (close) break;
  }
  run.service->router().set_observer(nullptr);
  return run;
}

}  // namespace cps
