#pragma once

// Rule-driven simulated smartcard.
//
// A CardProfile is an ordered rule list; the first rule whose pattern matches
// a command decides the outcome. A rule's guard conditions are checked in
// order and the first failing one supplies the status word, with no state
// change. Otherwise the response is generated and the effects are applied.
// The last rule is the match-anything fallback.

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <sodium.h>

#include "cps/apdu.hpp"

namespace cps {

// ---------------------------------------------------------------------------
// Patterns

struct AnyByte {
  friend bool operator==(const AnyByte&, const AnyByte&) = default;
};
struct ExactByte {
  Byte value = 0;
  friend bool operator==(const ExactByte&, const ExactByte&) = default;
};
struct OneOfBytes {
  std::set<Byte> values;
  friend bool operator==(const OneOfBytes&, const OneOfBytes&) = default;
};
using ByteMatcher = std::variant<AnyByte, ExactByte, OneOfBytes>;

struct AnyData {
  friend bool operator==(const AnyData&, const AnyData&) = default;
};
struct ExactData {
  Bytes value;  // empty means "no data field"
  friend bool operator==(const ExactData&, const ExactData&) = default;
};
struct DataOfLength {
  std::size_t length = 0;
  friend bool operator==(const DataOfLength&, const DataOfLength&) = default;
};
using DataMatcher = std::variant<AnyData, ExactData, DataOfLength>;

inline bool matches(const ByteMatcher& m, Byte b) {
  if (std::holds_alternative<AnyByte>(m)) return true;
  if (const auto* e = std::get_if<ExactByte>(&m)) return e->value == b;
  return std::get<OneOfBytes>(m).values.contains(b);
}

inline bool matches(const DataMatcher& m, const Bytes& data) {
  if (std::holds_alternative<AnyData>(m)) return true;
  if (const auto* e = std::get_if<ExactData>(&m)) return e->value == data;
  return std::get<DataOfLength>(m).length == data.size();
}

// Le is not part of the pattern: the cards under study ignore it.
struct CommandPattern {
  ByteMatcher cla = AnyByte{};
  ByteMatcher ins = AnyByte{};
  ByteMatcher p1 = AnyByte{};
  ByteMatcher p2 = AnyByte{};
  DataMatcher data = AnyData{};

  bool matches(const CommandApdu& cmd) const {
    return cps::matches(cla, cmd.cla) && cps::matches(ins, cmd.ins) && cps::matches(p1, cmd.p1) &&
           cps::matches(p2, cmd.p2) && cps::matches(data, cmd.data);
  }
  bool matches_anything() const {
    return std::holds_alternative<AnyByte>(cla) && std::holds_alternative<AnyByte>(ins) &&
           std::holds_alternative<AnyByte>(p1) && std::holds_alternative<AnyByte>(p2) &&
           std::holds_alternative<AnyData>(data);
  }

  friend bool operator==(const CommandPattern&, const CommandPattern&) = default;
};

// ---------------------------------------------------------------------------
// Guards, effects, responses (fixed vocabularies)

enum class Guard {
  Never,
  SeoIntact,
  DfOpened,
  SeRestored,
  KeySelected,
  PinVerified,
  PinMatches,
  ChallengePair,
};

enum class Effect {
  SelectMf,
  SelectDf,
  RestoreSe,
  SelectKey,
  VerifyPin,
  StoreCardChallenge,
  StoreHostChallenge,
  ConsumeChallenges,
  EraseSeo,
  CountSignature,
};

enum class ResponseKind { Empty, Challenge, Signature };

struct GuardCheck {
  Guard guard = Guard::Never;
  std::uint16_t failure_sw = sw::kConditionsNotSatisfied;
  friend bool operator==(const GuardCheck&, const GuardCheck&) = default;
};

struct AcceptanceRule {
  std::string name;
  CommandPattern pattern;
  std::vector<GuardCheck> guards;
  std::vector<Effect> effects;
  ResponseKind response = ResponseKind::Empty;
  friend bool operator==(const AcceptanceRule&, const AcceptanceRule&) = default;
};

struct CardProfile {
  std::string name;
  std::vector<AcceptanceRule> rules;
  Bytes pin;
  Byte key_id = 0;
  Bytes reset_response;
  friend bool operator==(const CardProfile&, const CardProfile&) = default;
};

class ProfileError : public Error {
 public:
  using Error::Error;
};

inline AcceptanceRule fallback_rule(std::uint16_t status = sw::kInsNotSupported) {
  return AcceptanceRule{"FALLBACK", CommandPattern{}, {{Guard::Never, status}}, {}, ResponseKind::Empty};
}

inline bool is_fallback(const AcceptanceRule& rule) {
  return rule.pattern.matches_anything() && rule.effects.empty() && !rule.guards.empty() &&
         rule.guards.front().guard == Guard::Never;
}

/// Throws ProfileError when the rule list is not terminated by exactly one
/// fallback, or the PIN length disagrees with the VERIFY rule.
inline void validate(const CardProfile& profile) {
  if (profile.name.empty()) throw ProfileError("profile has no name");
  if (profile.rules.empty() || !is_fallback(profile.rules.back())) {
    throw ProfileError("profile '" + profile.name + "' must end with a fallback rule");
  }
  for (std::size_t i = 0; i + 1 < profile.rules.size(); ++i) {
    if (profile.rules[i].pattern.matches_anything()) {
      throw ProfileError("profile '" + profile.name + "': rule '" + profile.rules[i].name +
                         "' matches everything but is not last");
    }
  }
  for (const auto& rule : profile.rules) {
    const bool checks_pin = std::ranges::any_of(
        rule.guards, [](const GuardCheck& g) { return g.guard == Guard::PinMatches; });
    if (!checks_pin) continue;
    const auto* len = std::get_if<DataOfLength>(&rule.pattern.data);
    if (len == nullptr || len->length != profile.pin.size()) {
      throw ProfileError("profile '" + profile.name + "': PIN length " +
                         std::to_string(profile.pin.size()) + " disagrees with rule '" + rule.name +
                         "'");
    }
  }
}

// ---------------------------------------------------------------------------
// State

enum class Directory { MasterFile, SignatureDf };

using Challenge = std::array<Byte, 8>;

struct CardState {
  Directory current_dir = Directory::MasterFile;
  bool df_opened = false;  // signature DF selected at least once since reset
  bool se_restored = false;
  std::optional<Byte> key_selected;
  bool pin_verified = false;
  std::optional<Challenge> card_challenge;
  std::optional<Challenge> host_challenge;
  bool seo_destroyed = false;  // survives reset
  std::uint64_t signatures_issued = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_draws = 0;
  std::mt19937_64 rng;

  friend bool operator==(const CardState&, const CardState&) = default;
};

inline constexpr std::size_t kSignatureSize = 128;

/// Deterministic 128-byte stand-in for an RSA signature: BLAKE2b over the
/// profile name, key reference and payload, expanded to two blocks.
inline Bytes pseudo_signature(std::string_view profile_name, std::optional<Byte> key,
                              ByteView payload) {
  if (sodium_init() < 0) throw Error("libsodium initialisation failed");
  Bytes out(kSignatureSize);
  constexpr std::size_t kBlock = crypto_generichash_BYTES_MAX;
  static_assert(kSignatureSize % kBlock == 0);
  for (std::size_t block = 0; block < kSignatureSize / kBlock; ++block) {
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, kBlock);
    const Byte header[] = {static_cast<Byte>(block), key.has_value() ? Byte{1} : Byte{0},
                           key.value_or(0), static_cast<Byte>(profile_name.size())};
    crypto_generichash_update(&st, header, sizeof header);
    crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(profile_name.data()),
                              profile_name.size());
    crypto_generichash_update(&st, payload.data(), payload.size());
    crypto_generichash_final(&st, out.data() + block * kBlock, kBlock);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Card

/// A single-threaded card instance. Callers serialize access.
class Card {
 public:
  Card(std::shared_ptr<const CardProfile> profile, std::uint64_t seed) : profile_(std::move(profile)) {
    validate(*profile_);
    state_.rng_seed = seed;
    state_.rng.seed(seed);
  }

  const CardProfile& profile() const noexcept { return *profile_; }
  const CardState& state() const noexcept { return state_; }

  /// Clears session state; a destroyed SEO stays destroyed.
  Bytes reset() {
    const bool destroyed = state_.seo_destroyed;
    const auto issued = state_.signatures_issued;
    auto rng = state_.rng;
    const auto seed = state_.rng_seed;
    const auto draws = state_.rng_draws;
    state_ = CardState{};
    state_.seo_destroyed = destroyed;
    state_.signatures_issued = issued;
    state_.rng = rng;
    state_.rng_seed = seed;
    state_.rng_draws = draws;
    return profile_->reset_response;
  }

  ResponseApdu execute(const CommandApdu& cmd) {
    for (const auto& rule : profile_->rules) {
      if (!rule.pattern.matches(cmd)) continue;
      for (const auto& check : rule.guards) {
        if (!holds(check.guard, cmd)) return ResponseApdu::with_status(check.failure_sw);
      }
      Bytes data = respond(rule.response, cmd);
      for (Effect e : rule.effects) apply(e, cmd, data);
      return ResponseApdu::with_status(sw::kSuccess, std::move(data));
    }
    // validate() guarantees the fallback terminates the list.
    return ResponseApdu::with_status(sw::kInsNotSupported);
  }

  Bytes sign_payload(ByteView payload) const {
    return pseudo_signature(profile_->name, state_.key_selected, payload);
  }

  CardState snapshot() const { return state_; }
  void restore_state(const CardState& snapshot) { state_ = snapshot; }

 private:
  bool holds(Guard g, const CommandApdu& cmd) const {
    switch (g) {
      case Guard::Never: return false;
      case Guard::SeoIntact: return !state_.seo_destroyed;
      case Guard::DfOpened: return state_.df_opened;
      case Guard::SeRestored: return state_.se_restored;
      case Guard::KeySelected: return state_.key_selected.has_value();
      case Guard::PinVerified: return state_.pin_verified;
      case Guard::PinMatches: return cmd.data == profile_->pin;
      case Guard::ChallengePair:
        return state_.card_challenge.has_value() && state_.host_challenge.has_value();
    }
    return false;
  }

  Bytes respond(ResponseKind kind, const CommandApdu& cmd) {
    switch (kind) {
      case ResponseKind::Empty: return {};
      case ResponseKind::Challenge: {
        const std::uint64_t word = state_.rng();
        ++state_.rng_draws;
        Bytes out(8);
        for (std::size_t i = 0; i < 8; ++i) out[i] = static_cast<Byte>(word >> (56 - 8 * i));
        return out;
      }
      case ResponseKind::Signature: return sign_payload(cmd.data);
    }
    return {};
  }

  static Challenge to_challenge(const Bytes& b) {
    Challenge c{};
    std::copy_n(b.begin(), c.size(), c.begin());
    return c;
  }

  void apply(Effect e, const CommandApdu& cmd, const Bytes& response) {
    switch (e) {
      case Effect::SelectMf: state_.current_dir = Directory::MasterFile; break;
      case Effect::SelectDf:
        state_.current_dir = Directory::SignatureDf;
        state_.df_opened = true;
        break;
      case Effect::RestoreSe: state_.se_restored = true; break;
      case Effect::SelectKey: state_.key_selected = profile_->key_id; break;
      case Effect::VerifyPin: state_.pin_verified = true; break;
      case Effect::StoreCardChallenge:
        if (response.size() == 8) state_.card_challenge = to_challenge(response);
        break;
      case Effect::StoreHostChallenge:
        if (cmd.data.size() == 8) state_.host_challenge = to_challenge(cmd.data);
        break;
      case Effect::ConsumeChallenges:
        state_.card_challenge.reset();
        state_.host_challenge.reset();
        break;
      case Effect::EraseSeo: state_.seo_destroyed = true; break;
      case Effect::CountSignature: ++state_.signatures_issued; break;
    }
  }

  std::shared_ptr<const CardProfile> profile_;
  CardState state_;
};

inline Card create_card(std::shared_ptr<const CardProfile> profile, std::uint64_t seed) {
  return Card(std::move(profile), seed);
}

}  // namespace cps
