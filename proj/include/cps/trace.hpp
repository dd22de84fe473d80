#pragma once

// Trace files. One header line, then two lines per record:
//
//   #CPS-TRACE 1 seed=7 cards=c1:cardos,c2:incrypto
//   <seq> <session> <card> C <command hex> - - <expected step or ->
//   <seq> <session> <card> R <data hex or -> <SW> <OK|ERR|ANOM>
//
// Sequence numbers run 1, 2, 3, ... with no gaps.

#include <cstdint>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cps/profile_config.hpp"
#include "cps/watchdog.hpp"

namespace cps {

inline constexpr int kTraceVersion = 1;

struct TraceFile {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> cards;  // id, profile
  std::vector<TraceRecord> records;

  friend bool operator==(const TraceFile&, const TraceFile&) = default;
};

class TraceError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline std::string format_trace_header(std::uint64_t seed, const std::vector<std::pair<std::string, std::string>>& cards) {
  std::string out = "#CPS-TRACE " + std::to_string(kTraceVersion) + " seed=" + std::to_string(seed) + " cards=";
  for (std::size_t i = 0; i < cards.size(); ++i) {
    if (i > 0) out += ',';
    out += cards[i].first + ':' + cards[i].second;
  }
  return out + '\n';
}

inline std::string format_record(const TraceRecord& r) {
  const std::string prefix = std::to_string(r.seq) + ' ' + r.session_id + ' ' + r.card_id + ' ';
  std::string out = prefix + "C " + to_hex(r.command) + " - - " +
                    (r.expected_step ? to_string(*r.expected_step) : std::string("-")) + '\n';
  out += prefix + "R " + (r.response.data.empty() ? std::string("-") : hex_format(r.response.data)) + ' ' +
         status_hex(r.response) + ' ' + std::string(verdict_code(r.verdict)) + '\n';
  return out;
}

inline void write_trace(std::ostream& out, const TraceFile& trace) {
  out << format_trace_header(trace.seed, trace.cards);
  for (const auto& r : trace.records) out << format_record(r);
}

inline std::string trace_text(const TraceFile& trace) {
  std::ostringstream out;
  write_trace(out, trace);
  return out.str();
}

inline void write_trace(const std::string& path, const TraceFile& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write trace file '" + path + "'");
  write_trace(out, trace);
  if (!out.flush()) throw Error("write failed for trace file '" + path + "'");
}

namespace detail {

inline TraceFile parse_trace_header(const std::string& line) {
  const auto tok = split_ws(line);
  if (tok.size() != 4 || tok[0] != "#CPS-TRACE") throw TraceError("missing #CPS-TRACE header", 1);
  if (tok[1] != std::to_string(kTraceVersion)) {
    throw TraceError("unsupported trace version " + tok[1] + " (expected " + std::to_string(kTraceVersion) + ")", 1);
  }
  TraceFile t;
  if (!tok[2].starts_with("seed=")) throw TraceError("expected seed=N", 1);
  try {
    std::size_t used = 0;
    t.seed = std::stoull(tok[2].substr(5), &used);
    if (used != tok[2].size() - 5) throw std::invalid_argument("trailing");
  } catch (const std::logic_error&) {
    throw TraceError("bad seed '" + tok[2] + "'", 1);
  }
  if (!tok[3].starts_with("cards=")) throw TraceError("expected cards=...", 1);
  const std::string list = tok[3].substr(6);
  if (!list.empty()) {
    for (const auto& entry : split_on(list, ',')) {
      const auto colon = entry.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == entry.size()) {
        throw TraceError("bad card entry '" + entry + "'", 1);
      }
      t.cards.emplace_back(entry.substr(0, colon), entry.substr(colon + 1));
    }
  }
  return t;
}

}  // namespace detail

inline TraceFile read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw TraceError("empty trace file", 1);
  TraceFile trace = detail::parse_trace_header(line);

  std::size_t lineno = 1;
  std::optional<TraceRecord> pending;  // command line awaiting its response
  std::size_t pending_line = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (in.eof()) throw TraceError("truncated line (no newline)", lineno);
    const auto tok = detail::split_ws(line);
    if (tok.size() < 4) throw TraceError("truncated record", lineno);
    std::uint64_t seq = 0;
    try {
      std::size_t used = 0;
      seq = std::stoull(tok[0], &used);
      if (used != tok[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw TraceError("bad sequence number '" + tok[0] + "'", lineno);
    }
    try {
      if (tok[3] == "C") {
        if (pending) throw TraceError("command without response", pending_line);
        if (tok.size() != 8) throw TraceError("command line needs 8 fields", lineno);
        if (seq != trace.records.size() + 1) {
          throw TraceError("sequence number " + tok[0] + " out of order", lineno);
        }
        if (tok[5] != "-" || tok[6] != "-") throw TraceError("command line has status fields", lineno);
        TraceRecord r;
        r.seq = seq;
        r.session_id = tok[1];
        r.card_id = tok[2];
        r.command = command_from_hex(tok[4]);
        if (tok[7] != "-") r.expected_step = detail::parse_label(tok[7], lineno);
        pending = std::move(r);
        pending_line = lineno;
      } else if (tok[3] == "R") {
        if (!pending) throw TraceError("response without command", lineno);
        if (tok.size() != 7) throw TraceError("response line needs 7 fields", lineno);
        if (seq != pending->seq || tok[1] != pending->session_id || tok[2] != pending->card_id) {
          throw TraceError("response does not match its command", lineno);
        }
        const Bytes sw = hex_parse(tok[5]);
        if (sw.size() != 2) throw TraceError("status word must be 2 bytes", lineno);
        const auto verdict = parse_verdict(tok[6]);
        if (!verdict) throw TraceError("unknown verdict '" + tok[6] + "'", lineno);
        pending->response.data = tok[4] == "-" ? Bytes{} : hex_parse(tok[4]);
        pending->response.sw1 = sw[0];
        pending->response.sw2 = sw[1];
        pending->verdict = *verdict;
        trace.records.push_back(std::move(*pending));
        pending.reset();
      } else {
        throw TraceError("unknown direction '" + tok[3] + "'", lineno);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw TraceError(e.what(), lineno);
    }
  }
  if (pending) throw TraceError("command without response", pending_line);
  return trace;
}

inline TraceFile read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace file '" + path + "'");
  return read_trace(in);
}

inline bool looks_like_trace(const std::string& path) {
  std::ifstream in(path);
  std::string first;
  return std::getline(in, first) && first.starts_with("#CPS-TRACE");
}

/// Appends records to a trace file as they happen. Each record goes out in a
/// single write and is flushed before append() returns.
class TraceWriter {
 public:
  TraceWriter(const std::string& path, std::uint64_t seed,
              const std::vector<std::pair<std::string, std::string>>& cards)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot write trace file '" + path + "'");
    out_ << format_trace_header(seed, cards) << std::flush;
  }

  void append(const TraceRecord& r) {
    const std::string text = format_record(r);
    std::lock_guard lock(mu_);
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace cps
