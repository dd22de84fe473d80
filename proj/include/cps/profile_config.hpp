#pragma once

// Text form of a CardProfile.
//
//   # comment
//   profile <name>
//   pin <hex>
//   key <hex byte>
//   reset <hex>
//   rule <NAME> cla=<m> ins=<m> p1=<m> p2=<m> data=<d> [guard=g:SW,...]
//        [effects=e,...] [response=empty|challenge|signature]
//   fallback <SW>
//
// Byte matchers <m>: "*" any, "80" exact, "80|81|8C" one-of.
// Data matchers <d>: "*" any, "-" none, "len:N" any N bytes, or exact hex.
// A rule line may be continued on following lines that start with whitespace.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cps/card.hpp"

namespace cps {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Logical lines: comments stripped, continuation lines joined. Each entry
// carries the physical line number where it started.
inline std::vector<std::pair<std::size_t, std::string>> logical_lines(std::istream& in) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    const bool continuation = raw.front() == ' ' || raw.front() == '\t';
    if (continuation && !out.empty()) {
      out.back().second += ' ' + raw;
    } else {
      out.emplace_back(lineno, raw);
    }
  }
  return out;
}

template <class Enum>
struct Vocabulary {
  std::vector<std::pair<std::string_view, Enum>> entries;

  Enum parse(std::string_view word, std::string_view what, std::size_t line) const {
    for (const auto& [name, value] : entries) {
      if (name == word) return value;
    }
    throw ConfigError("unknown " + std::string(what) + " '" + std::string(word) + "'", line);
  }
  std::string_view name(Enum value) const {
    for (const auto& [name, v] : entries) {
      if (v == value) return name;
    }
    return "?";
  }
};

inline const Vocabulary<Guard>& guard_vocabulary() {
  static const Vocabulary<Guard> v{{
      {"never", Guard::Never},
      {"seo_intact", Guard::SeoIntact},
      {"df_opened", Guard::DfOpened},
      {"se_restored", Guard::SeRestored},
      {"key_selected", Guard::KeySelected},
      {"pin_verified", Guard::PinVerified},
      {"pin_matches", Guard::PinMatches},
      {"challenge_pair", Guard::ChallengePair},
  }};
  return v;
}

inline const Vocabulary<Effect>& effect_vocabulary() {
  static const Vocabulary<Effect> v{{
      {"select_mf", Effect::SelectMf},
      {"select_df", Effect::SelectDf},
      {"restore_se", Effect::RestoreSe},
      {"select_key", Effect::SelectKey},
      {"verify_pin", Effect::VerifyPin},
      {"store_card_challenge", Effect::StoreCardChallenge},
      {"store_host_challenge", Effect::StoreHostChallenge},
      {"consume_challenges", Effect::ConsumeChallenges},
      {"erase_seo", Effect::EraseSeo},
      {"count_signature", Effect::CountSignature},
  }};
  return v;
}

inline const Vocabulary<ResponseKind>& response_vocabulary() {
  static const Vocabulary<ResponseKind> v{{
      {"empty", ResponseKind::Empty},
      {"challenge", ResponseKind::Challenge},
      {"signature", ResponseKind::Signature},
  }};
  return v;
}

inline std::uint16_t parse_sw(std::string_view text, std::size_t line) {
  try {
    const Bytes b = hex_parse(text);
    if (b.size() != 2) throw HexError("status word must be 2 bytes");
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  } catch (const HexError& e) {
    throw ConfigError(std::string("bad status word '") + std::string(text) + "': " + e.what(), line);
  }
}

inline ByteMatcher parse_byte_matcher(std::string_view text, std::size_t line) {
  try {
    if (text == "*") return AnyByte{};
    if (text.find('|') == std::string_view::npos) return ExactByte{hex_parse_byte(text)};
    OneOfBytes set;
    for (const auto& part : split_on(text, '|')) set.values.insert(hex_parse_byte(part));
    return set;
  } catch (const HexError& e) {
    throw ConfigError("bad byte matcher '" + std::string(text) + "': " + e.what(), line);
  }
}

inline DataMatcher parse_data_matcher(std::string_view text, std::size_t line) {
  if (text == "*") return AnyData{};
  if (text == "-") return ExactData{};
  if (text.starts_with("len:")) {
    try {
      const auto n = std::stoul(std::string(text.substr(4)));
      if (n > kMaxShortData) throw ConfigError("data length beyond short APDU", line);
      return DataOfLength{n};
    } catch (const std::logic_error&) {
      throw ConfigError("bad data length '" + std::string(text) + "'", line);
    }
  }
  try {
    return ExactData{hex_parse(text)};
  } catch (const HexError& e) {
    throw ConfigError("bad data matcher '" + std::string(text) + "': " + e.what(), line);
  }
}

inline std::string format_byte_matcher(const ByteMatcher& m) {
  if (std::holds_alternative<AnyByte>(m)) return "*";
  if (const auto* e = std::get_if<ExactByte>(&m)) return hex_format(e->value);
  std::string out;
  for (Byte b : std::get<OneOfBytes>(m).values) {
    if (!out.empty()) out += '|';
    out += hex_format(b);
  }
  return out;
}

inline std::string format_data_matcher(const DataMatcher& m) {
  if (std::holds_alternative<AnyData>(m)) return "*";
  if (const auto* e = std::get_if<ExactData>(&m)) return e->value.empty() ? "-" : hex_format(e->value);
  return "len:" + std::to_string(std::get<DataOfLength>(m).length);
}

inline std::string format_sw(std::uint16_t sw) {
  const Byte b[] = {static_cast<Byte>(sw >> 8), static_cast<Byte>(sw & 0xFF)};
  return hex_format(b);
}

inline AcceptanceRule parse_rule(const std::vector<std::string>& tok, std::size_t line) {
  if (tok.size() < 2) throw ConfigError("rule needs a name", line);
  AcceptanceRule rule;
  rule.name = tok[1];
  for (std::size_t i = 2; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + tok[i] + "'", line);
    const std::string key = tok[i].substr(0, eq);
    const std::string value = tok[i].substr(eq + 1);
    if (key == "cla") {
      rule.pattern.cla = parse_byte_matcher(value, line);
    } else if (key == "ins") {
      rule.pattern.ins = parse_byte_matcher(value, line);
    } else if (key == "p1") {
      rule.pattern.p1 = parse_byte_matcher(value, line);
    } else if (key == "p2") {
      rule.pattern.p2 = parse_byte_matcher(value, line);
    } else if (key == "data") {
      rule.pattern.data = parse_data_matcher(value, line);
    } else if (key == "guard") {
      for (const auto& item : split_on(value, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("guard needs a status word: '" + item + "'", line);
        rule.guards.push_back({guard_vocabulary().parse(item.substr(0, colon), "guard", line),
                               parse_sw(item.substr(colon + 1), line)});
      }
    } else if (key == "effects") {
      for (const auto& item : split_on(value, ',')) {
        rule.effects.push_back(effect_vocabulary().parse(item, "effect", line));
      }
    } else if (key == "response") {
      rule.response = response_vocabulary().parse(value, "response", line);
    } else {
      throw ConfigError("unknown rule field '" + key + "'", line);
    }
  }
  if (rule.pattern.matches_anything()) {
    throw ConfigError("rule '" + rule.name + "' matches everything; use 'fallback'", line);
  }
  return rule;
}

}  // namespace detail

inline CardProfile parse_profile(std::istream& in) {
  CardProfile profile;
  bool have_fallback = false;
  for (const auto& [line, text] : detail::logical_lines(in)) {
    const auto tok = detail::split_ws(text);
    const std::string& kw = tok.front();
    if (have_fallback) throw ConfigError("nothing may follow the fallback rule", line);
    auto arg = [&]() -> const std::string& {
      if (tok.size() != 2) throw ConfigError("'" + kw + "' takes exactly one argument", line);
      return tok[1];
    };
    try {
      if (kw == "profile") {
        profile.name = arg();
      } else if (kw == "pin") {
        profile.pin = hex_parse(arg());
      } else if (kw == "key") {
        profile.key_id = hex_parse_byte(arg());
      } else if (kw == "reset") {
        profile.reset_response = hex_parse(arg());
      } else if (kw == "rule") {
        profile.rules.push_back(detail::parse_rule(tok, line));
      } else if (kw == "fallback") {
        profile.rules.push_back(fallback_rule(detail::parse_sw(arg(), line)));
        have_fallback = true;
      } else {
        throw ConfigError("unknown directive '" + kw + "'", line);
      }
    } catch (const HexError& e) {
      throw ConfigError(e.what(), line);
    }
  }
  try {
    validate(profile);
  } catch (const ProfileError& e) {
    throw ConfigError(e.what(), 0);
  }
  return profile;
}

inline CardProfile parse_profile(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_profile(in);
}

inline CardProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open profile file '" + path + "'");
  return parse_profile(in);
}

inline std::string format_profile(const CardProfile& profile) {
  std::ostringstream out;
  out << "profile " << profile.name << '\n';
  out << "pin " << hex_format(profile.pin) << '\n';
  out << "key " << hex_format(profile.key_id) << '\n';
  if (!profile.reset_response.empty()) out << "reset " << hex_format(profile.reset_response) << '\n';
  for (const auto& rule : profile.rules) {
    if (is_fallback(rule)) {
      out << "fallback " << detail::format_sw(rule.guards.front().failure_sw) << '\n';
      continue;
    }
    const auto& p = rule.pattern;
    out << "rule " << rule.name << " cla=" << detail::format_byte_matcher(p.cla)
        << " ins=" << detail::format_byte_matcher(p.ins) << " p1=" << detail::format_byte_matcher(p.p1)
        << " p2=" << detail::format_byte_matcher(p.p2) << " data=" << detail::format_data_matcher(p.data);
    if (!rule.guards.empty()) {
      out << " guard=";
      for (std::size_t i = 0; i < rule.guards.size(); ++i) {
        out << (i ? "," : "") << detail::guard_vocabulary().name(rule.guards[i].guard) << ':'
            << detail::format_sw(rule.guards[i].failure_sw);
      }
    }
    if (!rule.effects.empty()) {
      out << " effects=";
      for (std::size_t i = 0; i < rule.effects.size(); ++i) {
        out << (i ? "," : "") << detail::effect_vocabulary().name(rule.effects[i]);
      }
    }
    if (rule.response != ResponseKind::Empty) {
      out << " response=" << detail::response_vocabulary().name(rule.response);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cps
