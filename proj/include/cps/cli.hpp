#pragma once

// Command-line front end. Exit codes: 0 clean, 2 anomalies recorded,
// 3 an error status terminated a run, 1 usage or internal error.

#include <csignal>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cps/explorer.hpp"
#include "cps/report.hpp"
#include "cps/scenarios.hpp"
#include "cps/server.hpp"
#include "cps/service.hpp"
#include "cps/trace.hpp"

namespace cps {

enum ExitCode : int { kExitClean = 0, kExitUsage = 1, kExitAnomaly = 2, kExitError = 3 };

inline int exit_code_for(std::span<const TraceRecord> trace) {
  bool anomaly = false;
  for (const auto& r : trace) {
    if (r.verdict == Classification::DetectedError) return kExitError;
    anomaly = anomaly || r.verdict == Classification::Anomaly;
  }
  return anomaly ? kExitAnomaly : kExitClean;
}

namespace detail {

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void on_stop_signal(int) { stop_requested() = true; }

inline std::pair<std::string, std::string> parse_card_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    throw Error("card must be given as <id>:<profile>, got '" + spec + "'");
  }
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

inline WatchdogPolicy watchdog_option(const std::string& text) {
  const auto p = parse_watchdog_policy(text);
  if (!p) throw Error("unknown watchdog policy '" + text + "' (off, first, second)");
  return *p;
}

inline void print_records(std::ostream& out, std::span<const TraceRecord> records) {
  for (const auto& r : records) out << format_record(r);
}

inline int replay_trace(const std::string& path, std::ostream& out) {
  const TraceFile original = read_trace(path);
  ServiceConfig config{original.seed, original.cards};
  Service service(config);
  auto& router = service.router();
  for (const auto& r : original.records) {
    try {
      router.dispatch(service.native_session(r.card_id), r.command);
    } catch (const SessionBlocked&) {
      break;
    }
  }
  const TraceFile again{original.seed, original.cards, router.trace()};
  print_records(out, again.records);
  if (again != original) {
    std::size_t i = 0;
    while (i < again.records.size() && i < original.records.size() && again.records[i] == original.records[i]) ++i;
    out << "replay diverges from the recorded trace at seq " << i + 1 << '\n';
    return kExitUsage;
  }
  out << "replay reproduces the recorded trace (" << again.records.size() << " records)\n";
  return exit_code_for(again.records);
}

inline int replay_commands(const std::string& path, const std::string& trace_out, std::ostream& out) {
  const auto file = load_command_file(path);
  const auto run = run_command_file(file, trace_out);
  for (const auto& [request, reply] : run.exchanges) out << request << " -> " << reply.text << '\n';
  const auto trace = run.service->router().trace();
  out << format_trace_summary(TraceFile{file.config.seed, run.service->card_list(), trace});
  return exit_code_for(trace);
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Smartcard interleaving probe: replays, explores and serves simulated cards"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t latency_ms = 0;
  std::string watchdog = "off";
  std::string trace_path;

  auto* run = app.add_subcommand("run", "run a certified program on a fresh card");
  std::string run_program_name, run_profile;
  run->add_option("program", run_program_name, "built-in program (P1-INCRYPTO, P2-CARDOS) or program file")->required();
  run->add_option("profile", run_profile, "built-in profile (cardos, incrypto) or profile file")->required();
  run->add_option("--seed", seed, "card and random-number seed");
  run->add_option("--latency", latency_ms, "per-command delay in milliseconds");
  run->add_option("--watchdog", watchdog, "off, first or second");
  run->add_option("--trace", trace_path, "write the trace here");

  auto* replay = app.add_subcommand("replay", "replay a command file or re-execute a trace file");
  std::string replay_path;
  replay->add_option("file", replay_path, "command file (.cmd) or trace file")->required()->check(CLI::ExistingFile);
  replay->add_option("--trace", trace_path, "write the trace of a command file here");

  auto* explore_cmd = app.add_subcommand("explore", "enumerate interleavings of two programs on one card");
  std::string pa, pb, explore_profile, strategy = "exhaustive", report_path;
  std::size_t cap = kDefaultExplorationCap;
  explore_cmd->add_option("program_a", pa)->required();
  explore_cmd->add_option("program_b", pb)->required();
  explore_cmd->add_option("profile", explore_profile)->required();
  explore_cmd->add_option("--strategy", strategy, "exhaustive, prune or memo");
  explore_cmd->add_option("--seed", seed);
  explore_cmd->add_option("--cap", cap, "maximum combined program length");
  explore_cmd->add_option("--report", report_path, "write the report here");

  auto* sweep = app.add_subcommand("sweep-challenges", "insert the challenge pair before every step of a program");
  std::string victim = std::string(kProgramCardOs), sweep_profile = std::string(kCardOsProfile);
  sweep->add_option("--victim", victim);
  sweep->add_option("--profile", sweep_profile);
  sweep->add_option("--seed", seed);

  auto* loop = app.add_subcommand("loopback", "insert SELECT MF after each command of the modified-command mix");
  std::string loop_hex = "00A40000FF";
  loop->add_option("--loop", loop_hex, "command to insert (hex)");
  loop->add_option("--seed", seed);

  auto* report = app.add_subcommand("report", "summarize a report or trace file");
  std::string report_file;
  report->add_option("file", report_file)->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "run the TCP line daemon");
  std::uint16_t port = 7816;
  std::string host = "127.0.0.1";
  std::vector<std::string> card_specs;
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--host", host);
  serve->add_option("--card", card_specs, "<id>:<profile>, repeatable (default c1:cardos)");
  serve->add_option("--seed", seed);
  serve->add_option("--latency", latency_ms);
  serve->add_option("--watchdog", watchdog);
  serve->add_option("--trace", trace_path, "append every executed command here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitClean : kExitUsage;
  }

  try {
    if (*run) {
      const auto program = resolve_program(run_program_name);
      const auto profile = resolve_profile(run_profile);
      Router router(seed);
      router.set_latency(std::chrono::milliseconds(latency_ms));
      router.set_watchdog(detail::watchdog_option(watchdog));
      router.add_card("c1", profile);
      const auto sid = router.open_session(program, "c1");
      const auto records = router.run_program(sid);
      detail::print_records(out, records);
      const Session s = router.session(sid);
      out << "session " << sid << ": " << to_string(s.status) << ", anomalies=" << s.anomalies;
      if (!records.empty() && records.back().response.data.size() == kSignatureSize) {
        out << ", signature " << kSignatureSize << " bytes";
      }
      out << '\n';
      if (!trace_path.empty()) write_trace(trace_path, TraceFile{seed, {{"c1", profile->name}}, router.trace()});
      return exit_code_for(records);
    }
    if (*replay) {
      if (looks_like_trace(replay_path)) return detail::replay_trace(replay_path, out);
      return detail::replay_commands(replay_path, trace_path, out);
    }
    if (*explore_cmd) {
      const auto s = parse_strategy(strategy);
      if (!s) {
        err << "unknown strategy '" << strategy << "' (exhaustive, prune, memo)\n";
        return kExitUsage;
      }
      const auto r = explore(resolve_program(pa), resolve_program(pb), resolve_profile(explore_profile), *s, seed, cap);
      out << (report_path.empty() ? format_report(r) : emit_report(r, report_path));
      return kExitClean;
    }
    if (*sweep) {
      const auto r = challenge_insertion_sweep(resolve_program(victim), challenge_pair_program(),
                                               resolve_profile(sweep_profile), seed);
      out << format_sweep(r);
      bool anomalies = false;
      for (const auto& p : r.points) {
        if (p.terminal.kind == TerminalKind::TerminatedOnError) return kExitError;
        anomalies = anomalies || p.terminal.anomalies > 0;
      }
      return anomalies ? kExitAnomaly : kExitClean;
    }
    if (*loop) {
      const auto scenario = modified_command_scenario(seed);
      const auto variants = loopback_variants(scenario.apdus(), command_from_hex(loop_hex));
      const auto profile = resolve_profile(scenario.profile);
      int code = kExitClean;
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const auto r = run_sequence(variants[i], p1_incrypto(), profile, seed);
        std::size_t errors = 0;
        for (const auto& rec : r.trace) errors += rec.response.ok() ? 0 : 1;
        out << "loop after command " << i + 1 << ": " << describe(r.terminal) << ", error status words=" << errors
            << '\n';
        code = std::max(code, exit_code_for(r.trace));
      }
      return code;
    }
    if (*report) {
      if (looks_like_trace(report_file)) {
        out << format_trace_summary(read_trace(report_file));
      } else {
        out << format_report(load_report(report_file));
      }
      return kExitClean;
    }
    if (*serve) {
      ServiceConfig config{seed, {}, detail::watchdog_option(watchdog), std::chrono::milliseconds(latency_ms)};
      if (card_specs.empty()) card_specs.push_back("c1:cardos");
      for (const auto& spec : card_specs) config.cards.push_back(detail::parse_card_spec(spec));
      Service service(config);
      std::unique_ptr<TraceWriter> writer;
      if (!trace_path.empty()) {
        writer = std::make_unique<TraceWriter>(trace_path, seed, service.card_list());
        service.attach_trace(*writer);
      }
      TcpServer server(service, port, host);
      std::signal(SIGINT, detail::on_stop_signal);
      std::signal(SIGTERM, detail::on_stop_signal);
      out << "listening on " << host << ':' << server.port() << std::endl;
      std::thread acceptor([&server] { server.run(); });
      while (!detail::stop_requested()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      acceptor.join();
      service.router().set_observer(nullptr);
      return kExitClean;
    }
  } catch (const ServerError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cps
