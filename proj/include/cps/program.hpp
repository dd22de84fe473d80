#pragma once

// Straight-line programs: ordered command templates for one card type.
//
// A template is a command APDU whose data field may contain wildcard
// segments (PIN, host random number, signature payload). Everything else,
// including Le, is fixed.
//
// Program file format:
//   program <ID> <card-type>
//   <i,j> <STEP_NAME> <hex template>
// where the hex template is the encoded APDU with wildcard segments written
// as {PIN:n}, {RN:n} or {PAYLOAD:n}, e.g.
//   2,4 VERIFY 0C20009004{PIN:4}00

#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cps/apdu.hpp"
#include "cps/profile_config.hpp"
#include "cps/profiles.hpp"

namespace cps {

enum class Wildcard { Pin, RandomNumber, Payload };

inline std::string_view wildcard_name(Wildcard w) {
  switch (w) {
    case Wildcard::Pin: return "PIN";
    case Wildcard::RandomNumber: return "RN";
    case Wildcard::Payload: return "PAYLOAD";
  }
  return "?";
}

struct FixedSegment {
  Bytes bytes;
  friend bool operator==(const FixedSegment&, const FixedSegment&) = default;
};
struct WildcardSegment {
  Wildcard kind = Wildcard::Pin;
  std::size_t length = 0;
  friend bool operator==(const WildcardSegment&, const WildcardSegment&) = default;
};
using Segment = std::variant<FixedSegment, WildcardSegment>;

struct CommandTemplate {
  Byte cla = 0, ins = 0, p1 = 0, p2 = 0;
  std::vector<Segment> data;
  std::optional<Byte> le;

  std::size_t data_length() const {
    std::size_t n = 0;
    for (const auto& s : data) {
      n += std::holds_alternative<FixedSegment>(s) ? std::get<FixedSegment>(s).bytes.size()
                                                   : std::get<WildcardSegment>(s).length;
    }
    return n;
  }

  /// Fixed bytes equal, wildcard segments accept any value of their length.
  bool matches(const CommandApdu& cmd) const {
    if (cmd.cla != cla || cmd.ins != ins || cmd.p1 != p1 || cmd.p2 != p2 || cmd.le != le) return false;
    if (cmd.data.size() != data_length()) return false;
    std::size_t pos = 0;
    for (const auto& s : data) {
      if (const auto* f = std::get_if<FixedSegment>(&s)) {
        if (!std::equal(f->bytes.begin(), f->bytes.end(), cmd.data.begin() + static_cast<std::ptrdiff_t>(pos))) {
          return false;
        }
        pos += f->bytes.size();
      } else {
        pos += std::get<WildcardSegment>(s).length;
      }
    }
    return true;
  }

  friend bool operator==(const CommandTemplate&, const CommandTemplate&) = default;
};

struct StepLabel {
  int program = 0;
  int step = 0;
  friend bool operator==(const StepLabel&, const StepLabel&) = default;
  friend auto operator<=>(const StepLabel&, const StepLabel&) = default;
};

inline std::string to_string(const StepLabel& l) {
  return std::to_string(l.program) + "," + std::to_string(l.step);
}

struct ProgramStep {
  StepLabel label;
  std::string name;
  CommandTemplate command;
  friend bool operator==(const ProgramStep&, const ProgramStep&) = default;
};

struct StraightLineProgram {
  std::string id;
  std::string card_type;
  std::vector<ProgramStep> steps;

  std::size_t size() const noexcept { return steps.size(); }

  /// Index of the first step whose name (or "i,j" label) is `ref`.
  std::optional<std::size_t> find_step(std::string_view ref) const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].name == ref || to_string(steps[i].label) == ref) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const StraightLineProgram&, const StraightLineProgram&) = default;
};

class MissingBinding : public Error {
 public:
  using Error::Error;
};

class ProgramError : public Error {
 public:
  using Error::Error;
};

using Bindings = std::map<Wildcard, Bytes>;

inline CommandApdu instantiate_step(const StraightLineProgram& program, std::size_t index,
                                    const Bindings& bindings) {
  if (index >= program.size()) {
    throw ProgramError("step index " + std::to_string(index) + " out of range for " + program.id);
  }
  const auto& t = program.steps[index].command;
  CommandApdu cmd{t.cla, t.ins, t.p1, t.p2, {}, t.le};
  for (const auto& s : t.data) {
    if (const auto* f = std::get_if<FixedSegment>(&s)) {
      cmd.data.insert(cmd.data.end(), f->bytes.begin(), f->bytes.end());
      continue;
    }
    const auto& w = std::get<WildcardSegment>(s);
    const auto it = bindings.find(w.kind);
    if (it == bindings.end()) {
      throw MissingBinding("step " + to_string(program.steps[index].label) + " of " + program.id +
                           " needs a " + std::string(wildcard_name(w.kind)) + " binding");
    }
    if (it->second.size() != w.length) {
      throw MissingBinding(std::string(wildcard_name(w.kind)) + " binding has " +
                           std::to_string(it->second.size()) + " bytes, step " +
                           to_string(program.steps[index].label) + " needs " + std::to_string(w.length));
    }
    cmd.data.insert(cmd.data.end(), it->second.begin(), it->second.end());
  }
  return cmd;
}

/// The canonical signature payload: bytes 00..74.
inline Bytes default_payload() {
  Bytes out(0x75);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Byte>(i);
  return out;
}

/// Host random number for one step, derived from (seed, program, step) so
/// that it does not depend on the interleaving the step appears in.
inline Bytes derive_random_number(std::uint64_t seed, std::string_view program_id, std::size_t index,
                                  std::size_t length = 8) {
  const std::uint64_t h = fnv1a(program_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 gen(seq);
  Bytes out(length);
  for (std::size_t i = 0; i < length; i += 8) {
    const std::uint64_t word = gen();
    for (std::size_t k = 0; k < 8 && i + k < length; ++k) out[i + k] = static_cast<Byte>(word >> (56 - 8 * k));
  }
  return out;
}

/// Bindings the middleware would supply: PIN of the program's own card type,
/// a derived random number, and the canonical payload.
inline Bindings default_bindings(const StraightLineProgram& program, std::size_t index, std::uint64_t seed) {
  Bindings out;
  if (index >= program.size()) return out;
  for (const auto& s : program.steps[index].command.data) {
    const auto* w = std::get_if<WildcardSegment>(&s);
    if (w == nullptr) continue;
    switch (w->kind) {
      case Wildcard::Pin:
        if (auto profile = builtin_profile(program.card_type)) out[Wildcard::Pin] = profile->pin;
        break;
      case Wildcard::RandomNumber:
        out[Wildcard::RandomNumber] = derive_random_number(seed, program.id, index, w->length);
        break;
      case Wildcard::Payload: {
        Bytes payload = default_payload();
        payload.resize(w->length);
        out[Wildcard::Payload] = std::move(payload);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text form

namespace detail {

inline CommandTemplate parse_template(std::string_view text, std::size_t line) {
  // Flatten into a sequence of byte slots; wildcard slots carry no value.
  struct Slot {
    std::optional<Byte> value;
    std::optional<Wildcard> wildcard;
  };
  std::vector<Slot> slots;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i);
      if (close == std::string_view::npos) throw ConfigError("unterminated wildcard", line);
      const auto body = text.substr(i + 1, close - i - 1);
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) throw ConfigError("wildcard needs a length", line);
      const auto name = body.substr(0, colon);
      Wildcard kind;
      if (name == "PIN") kind = Wildcard::Pin;
      else if (name == "RN") kind = Wildcard::RandomNumber;
      else if (name == "PAYLOAD") kind = Wildcard::Payload;
      else throw ConfigError("unknown wildcard '" + std::string(name) + "'", line);
      std::size_t n = 0;
      try {
        n = std::stoul(std::string(body.substr(colon + 1)));
      } catch (const std::logic_error&) {
        throw ConfigError("bad wildcard length", line);
      }
      if (n == 0) throw ConfigError("wildcard length must be positive", line);
      for (std::size_t k = 0; k < n; ++k) slots.push_back({std::nullopt, kind});
      i = close + 1;
      continue;
    }
    if (i + 1 >= text.size()) throw ConfigError("odd number of hex digits in template", line);
    try {
      slots.push_back({hex_parse_byte(text.substr(i, 2)), std::nullopt});
    } catch (const HexError& e) {
      throw ConfigError(std::string("bad template: ") + e.what(), line);
    }
    i += 2;
  }

  auto fixed = [&](std::size_t k, const char* what) {
    if (k >= slots.size() || !slots[k].value) throw ConfigError(std::string(what) + " must be a fixed byte", line);
    return *slots[k].value;
  };
  if (slots.size() < 4) throw ConfigError("template shorter than the APDU header", line);
  CommandTemplate t{fixed(0, "CLA"), fixed(1, "INS"), fixed(2, "P1"), fixed(3, "P2"), {}, std::nullopt};
  if (slots.size() == 4) return t;
  if (slots.size() == 5) {
    t.le = fixed(4, "Le");
    return t;
  }
  const std::size_t lc = fixed(4, "Lc");
  if (lc == 0 || (slots.size() != 5 + lc && slots.size() != 6 + lc)) {
    throw ConfigError("template length matches no short APDU case", line);
  }
  for (std::size_t k = 5; k < 5 + lc; ++k) {
    if (slots[k].value) {
      if (t.data.empty() || !std::holds_alternative<FixedSegment>(t.data.back())) t.data.push_back(FixedSegment{});
      std::get<FixedSegment>(t.data.back()).bytes.push_back(*slots[k].value);
    } else {
      auto* last = t.data.empty() ? nullptr : std::get_if<WildcardSegment>(&t.data.back());
      if (last != nullptr && last->kind == *slots[k].wildcard) {
        ++last->length;
      } else {
        t.data.push_back(WildcardSegment{*slots[k].wildcard, 1});
      }
    }
  }
  if (slots.size() == 6 + lc) t.le = fixed(5 + lc, "Le");
  return t;
}

inline std::string format_template(const CommandTemplate& t) {
  const Byte header[] = {t.cla, t.ins, t.p1, t.p2};
  std::string out = hex_format(header);
  if (!t.data.empty()) {
    out += hex_format(static_cast<Byte>(t.data_length()));
    for (const auto& s : t.data) {
      if (const auto* f = std::get_if<FixedSegment>(&s)) {
        out += hex_format(f->bytes);
      } else {
        const auto& w = std::get<WildcardSegment>(s);
        out += "{" + std::string(wildcard_name(w.kind)) + ":" + std::to_string(w.length) + "}";
      }
    }
  }
  if (t.le) out += hex_format(*t.le);
  return out;
}

inline StepLabel parse_label(std::string_view text, std::size_t line) {
  const auto parts = split_on(text, ',');
  try {
    if (parts.size() == 2) return StepLabel{std::stoi(parts[0]), std::stoi(parts[1])};
  } catch (const std::logic_error&) {
  }
  throw ConfigError("bad step label '" + std::string(text) + "'", line);
}

}  // namespace detail

inline StraightLineProgram parse_program(std::istream& in) {
  StraightLineProgram program;
  for (const auto& [line, text] : detail::logical_lines(in)) {
    const auto tok = detail::split_ws(text);
    if (tok.front() == "program") {
      if (tok.size() != 3) throw ConfigError("expected 'program <id> <card-type>'", line);
      program.id = tok[1];
      program.card_type = tok[2];
      continue;
    }
    if (program.id.empty()) throw ConfigError("step before 'program' header", line);
    if (tok.size() != 3) throw ConfigError("expected '<i,j> <NAME> <template>'", line);
    program.steps.push_back({detail::parse_label(tok[0], line), tok[1], detail::parse_template(tok[2], line)});
  }
  if (program.id.empty()) throw ConfigError("missing 'program' header", 0);
  return program;
}

inline StraightLineProgram parse_program(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_program(in);
}

inline std::string format_program(const StraightLineProgram& program) {
  std::ostringstream out;
  out << "program " << program.id << ' ' << program.card_type << '\n';
  for (const auto& s : program.steps) {
    out << to_string(s.label) << ' ' << s.name << ' ' << detail::format_template(s.command) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Built-in programs

inline constexpr std::string_view kProgramIncrypto = "P1-INCRYPTO";
inline constexpr std::string_view kProgramCardOs = "P2-CARDOS";
inline constexpr std::string_view kProgramErase = "ERASE-SEO";
inline constexpr std::string_view kProgramChallengePair = "CHALLENGE-PAIR";

inline const StraightLineProgram& p1_incrypto() {
  static const StraightLineProgram p = parse_program(
      "program P1-INCRYPTO incrypto\n"
      "1,1 MF 00A40000FF\n"
      "1,2 CHDIR 00A40000021400FF\n"
      "1,3 MSE_RESTORE 0022F30300\n"
      "1,4 MSE_SET 0022F1B60383011000\n"
      "1,5 GET_CHAL 0084000008\n"
      "1,6 GIVE_CHAL 8086000008{RN:8}00\n"
      "1,7 VERIFY 0C20009A08{PIN:8}00\n"
      "1,8 GET_CHAL 0084000008\n"
      "1,9 GIVE_CHAL 8086000008{RN:8}00\n"
      "1,10 PSO_CDS 0C2A9E9A75{PAYLOAD:117}FF\n");
  return p;
}

inline const StraightLineProgram& p2_cardos() {
  static const StraightLineProgram p = parse_program(
      "program P2-CARDOS cardos\n"
      "2,1 MF 00A40000FF\n"
      "2,2 MSE_RESTORE 0022F33000\n"
      "2,3 MSE_SET 0022F1B6054D0083013100\n"
      "2,4 VERIFY 0C20009004{PIN:4}00\n"
      "2,5 PSO_CDS 0C2A9E9A75{PAYLOAD:117}FF\n");
  return p;
}

/// A foreign application issuing MSE ERASE; not tied to any card type.
inline const StraightLineProgram& erase_program() {
  static const StraightLineProgram p = parse_program(
      "program ERASE-SEO generic\n"
      "2,1 MSE_ERASE 0022F40300\n");
  return p;
}

/// The secure-messaging challenge exchange of P1 (its steps 1,5 and 1,6).
inline const StraightLineProgram& challenge_pair_program() {
  static const StraightLineProgram p = parse_program(
      "program CHALLENGE-PAIR incrypto\n"
      "1,5 GET_CHAL 0084000008\n"
      "1,6 GIVE_CHAL 8086000008{RN:8}00\n");
  return p;
}

inline const StraightLineProgram* builtin_program(std::string_view name) {
  if (name == kProgramIncrypto || name == "P1") return &p1_incrypto();
  if (name == kProgramCardOs || name == "P2") return &p2_cardos();
  if (name == kProgramErase || name == "ERASE") return &erase_program();
  if (name == kProgramChallengePair) return &challenge_pair_program();
  return nullptr;
}

/// Built-in program for a card type (its certified signature process).
inline const StraightLineProgram* native_program(std::string_view card_type) {
  if (card_type == kIncryptoProfile) return &p1_incrypto();
  if (card_type == kCardOsProfile) return &p2_cardos();
  return nullptr;
}

inline StraightLineProgram load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open program file '" + path + "'");
  return parse_program(in);
}

inline StraightLineProgram resolve_program(const std::string& name_or_path) {
  if (const auto* p = builtin_program(name_or_path)) return *p;
  return load_program(name_or_path);
}

}  // namespace cps
