#pragma once

// Built-in card profiles. The same rule sets ship as data/profiles/*.profile.

#include <memory>
#include <string>
#include <string_view>

#include "cps/card.hpp"
#include "cps/profile_config.hpp"

namespace cps {

inline constexpr std::string_view kCardOsProfile = "cardos";
inline constexpr std::string_view kIncryptoProfile = "incrypto";

namespace detail {

inline CommandPattern header(Byte cla, Byte ins, ByteMatcher p1, ByteMatcher p2, DataMatcher data) {
  return CommandPattern{ExactByte{cla}, ExactByte{ins}, std::move(p1), std::move(p2), std::move(data)};
}

inline ExactByte b(Byte v) { return ExactByte{v}; }

}  // namespace detail

/// The signature card driven by the five-step process: select MF, restore
/// the security environment, pick the key, verify PIN, compute signature.
/// It also tolerates the other card's challenge commands.
inline CardProfile cardos_profile() {
  using namespace detail;
  CardProfile p;
  p.name = std::string(kCardOsProfile);
  p.pin = {0x31, 0x32, 0x33, 0x34};
  p.key_id = 0x31;
  p.reset_response = hex_parse("3BD2180081310A58C90114");
  p.rules = {
      {"SELECT_MF", header(0x00, 0xA4, b(0x00), b(0x00), ExactData{}), {}, {Effect::SelectMf}},
      {"SELECT_OTHER", header(0x00, 0xA4, AnyByte{}, AnyByte{}, AnyData{}),
       {{Guard::Never, sw::kFileNotFound}}, {}},
      {"MSE_RESTORE", header(0x00, 0x22, b(0xF3), b(0x30), ExactData{}),
       {{Guard::SeoIntact, sw::kConditionsNotSatisfied}}, {Effect::RestoreSe}},
      {"MSE_SET", header(0x00, 0x22, b(0xF1), b(0xB6), ExactData{{0x4D, 0x00, 0x83, 0x01, 0x31}}),
       {{Guard::SeRestored, sw::kConditionsNotSatisfied}}, {Effect::SelectKey}},
      {"MSE_OTHER", header(0x00, 0x22, AnyByte{}, AnyByte{}, AnyData{}),
       {{Guard::Never, sw::kIncorrectP1P2}}, {}},
      {"VERIFY", header(0x0C, 0x20, b(0x00), b(0x90), DataOfLength{4}),
       {{Guard::PinMatches, sw::kPinMismatch}}, {Effect::VerifyPin}},
      {"PSO_CDS", header(0x0C, 0x2A, b(0x9E), b(0x9A), DataOfLength{0x75}),
       {{Guard::KeySelected, sw::kSecurityStatus}, {Guard::PinVerified, sw::kSecurityStatus}},
       {Effect::CountSignature}, ResponseKind::Signature},
      {"GET_CHALLENGE", header(0x00, 0x84, b(0x00), b(0x00), ExactData{}), {}, {},
       ResponseKind::Challenge},
      {"GIVE_CHALLENGE", header(0x80, 0x86, b(0x00), b(0x00), DataOfLength{8}), {}, {}},
      fallback_rule(),
  };
  return p;
}

/// The secure-messaging signature card driven by the ten-step process. Its
/// rules encode the observed tolerance for undefined and modified commands,
/// the loop-back to MF, and the PIN-less MSE ERASE.
inline CardProfile incrypto_profile() {
  using namespace detail;
  CardProfile p;
  p.name = std::string(kIncryptoProfile);
  p.pin = {0x31, 0x32, 0x33, 0x34, 0x35, 0x36, 0x37, 0x38};
  p.key_id = 0x10;
  p.reset_response = hex_parse("3BFF1800008131FE4580");
  p.rules = {
      {"SELECT_MF", header(0x00, 0xA4, b(0x00), b(0x00), ExactData{}), {}, {Effect::SelectMf}},
      {"SELECT_DF", header(0x00, 0xA4, b(0x00), b(0x00), ExactData{{0x14, 0x00}}), {},
       {Effect::SelectDf}},
      {"SELECT_OTHER", header(0x00, 0xA4, AnyByte{}, AnyByte{}, AnyData{}),
       {{Guard::Never, sw::kFileNotFound}}, {}},
      {"MSE_RESTORE", header(0x00, 0x22, b(0xF3), b(0x03), ExactData{}),
       {{Guard::SeoIntact, sw::kConditionsNotSatisfied},
        {Guard::DfOpened, sw::kReferencedDataNotFound}},
       {Effect::RestoreSe}},
      {"MSE_SET", header(0x00, 0x22, b(0xF1), b(0xB6), ExactData{{0x83, 0x01, 0x10}}),
       {{Guard::SeRestored, sw::kConditionsNotSatisfied}}, {Effect::SelectKey}},
      {"MSE_ERASE", header(0x00, 0x22, b(0xF4), b(0x03), ExactData{}), {}, {Effect::EraseSeo}},
      {"MSE_OTHER", header(0x00, 0x22, AnyByte{}, AnyByte{}, AnyData{}),
       {{Guard::Never, sw::kIncorrectP1P2}}, {}},
      {"GET_CHALLENGE", header(0x00, 0x84, AnyByte{}, AnyByte{}, ExactData{}), {},
       {Effect::StoreCardChallenge}, ResponseKind::Challenge},
      {"GIVE_CHALLENGE",
       CommandPattern{OneOfBytes{{0x80, 0x81, 0x8C, 0x8F}}, b(0x86), AnyByte{}, AnyByte{}, AnyData{}},
       {}, {Effect::StoreHostChallenge}},
      {"VERIFY", header(0x0C, 0x20, b(0x00), b(0x9A), DataOfLength{8}),
       {{Guard::ChallengePair, sw::kSecurityStatus}, {Guard::PinMatches, sw::kPinMismatch}},
       {Effect::VerifyPin, Effect::ConsumeChallenges}},
      {"PSO_CDS", header(0x0C, 0x2A, b(0x9E), b(0x9A), DataOfLength{0x75}),
       {{Guard::KeySelected, sw::kSecurityStatus},
        {Guard::PinVerified, sw::kSecurityStatus},
        {Guard::ChallengePair, sw::kSecurityStatus}},
       {Effect::ConsumeChallenges, Effect::CountSignature}, ResponseKind::Signature},
      fallback_rule(),
  };
  return p;
}

/// Built-in profile by name, or nullptr.
inline std::shared_ptr<const CardProfile> builtin_profile(std::string_view name) {
  static const auto cardos = std::make_shared<const CardProfile>(cardos_profile());
  static const auto incrypto = std::make_shared<const CardProfile>(incrypto_profile());
  if (name == kCardOsProfile) return cardos;
  if (name == kIncryptoProfile) return incrypto;
  return nullptr;
}

/// A built-in name, or otherwise a path to a profile file.
inline std::shared_ptr<const CardProfile> resolve_profile(const std::string& name_or_path) {
  if (auto p = builtin_profile(name_or_path)) return p;
  return std::make_shared<const CardProfile>(load_profile(name_or_path));
}

}  // namespace cps
