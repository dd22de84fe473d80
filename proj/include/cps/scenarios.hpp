#pragma once

// The concrete command sequences studied by the harness: the challenge pair
// slipped into the CardOS signature, the modified/undefined command mix run
// on Incrypto, and the erase that disables signing.

#include <cstdint>
#include <string>
#include <vector>

#include "cps/apdu.hpp"
#include "cps/program.hpp"

namespace cps {

struct ScenarioCommand {
  std::string node;  // "2,3" for certified steps, "2,k" style for foreign rows
  std::string name;
  CommandApdu command;
  bool foreign = false;  // not a step of the victim program
};

struct Scenario {
  std::string id;
  std::string profile;         // card the sequence runs on
  std::string victim_program;  // program certified for that card
  std::vector<ScenarioCommand> commands;

  std::vector<CommandApdu> apdus() const {
    std::vector<CommandApdu> out;
    for (const auto& c : commands) out.push_back(c.command);
    return out;
  }
};

namespace detail {

inline ScenarioCommand program_step(const StraightLineProgram& p, std::string_view label, bool foreign,
                                    std::uint64_t seed) {
  const auto idx = p.find_step(label);
  if (!idx) throw ProgramError("no step " + std::string(label) + " in " + p.id);
  const auto& step = p.steps[*idx];
  return {to_string(step.label), step.name, instantiate_step(p, *idx, default_bindings(p, *idx, seed)), foreign};
}

inline ScenarioCommand raw(std::string node, std::string name, std::string_view hex) {
  return {std::move(node), std::move(name), command_from_hex(hex), true};
}

}  // namespace detail

/// CardOS signature with the Incrypto Get/Give Challenge pair after MSE Set.
inline Scenario challenge_interleave_scenario(std::uint64_t seed) {
  const auto& p1 = p1_incrypto();
  const auto& p2 = p2_cardos();
  return {"CHALLENGE-INTERLEAVE", std::string(kCardOsProfile), p2.id,
          {detail::program_step(p2, "2,1", false, seed), detail::program_step(p2, "2,2", false, seed),
           detail::program_step(p2, "2,3", false, seed), detail::program_step(p1, "1,5", true, seed),
           detail::program_step(p1, "1,6", true, seed), detail::program_step(p2, "2,4", false, seed),
           detail::program_step(p2, "2,5", false, seed)}};
}

inline constexpr std::string_view kModifiedScenarioId = "MODIFIED-MIX";

/// Incrypto signature interleaved with undefined classes (81/8F/8C) and
/// Get/Give Challenge variants carrying non-zero P1/P2.
inline Scenario modified_command_scenario(std::uint64_t seed) {
  const auto& p1 = p1_incrypto();
  auto give = [&](std::string node, std::size_t row) {
    CommandApdu cmd{0x80, 0x86, 0xAC, 0x45, derive_random_number(seed, kModifiedScenarioId, row), 0x00};
    return ScenarioCommand{std::move(node), "GIVE_CHAL", std::move(cmd), true};
  };
  auto step = [&](std::string_view label) { return detail::program_step(p1, label, false, seed); };
  using detail::raw;
  return {std::string(kModifiedScenarioId), std::string(kIncryptoProfile), p1.id,
          {step("1,1"),
           raw("2,k", "UNDEFINED1", "81860000021400"),
           raw("2,k+1", "UNDEFINED2", "8F860000021400"),
           give("2,k+2", 3),
           step("1,2"),
           raw("2,l", "UNDEFINED1", "81860000021400"),
           step("1,3"),
           step("1,4"),
           raw("2,m", "GET_CHAL", "0084BD1708"),
           give("2,m+1", 9),
           step("1,7"),
           raw("2,n", "UNDEFINED3", "8C860000021400"),
           raw("2,n+1", "GET_CHAL", "0084BD1708"),
           give("2,n+2", 13),
           step("1,10"),
           raw("2,p", "UNDEFINED3", "8C860000021400")}};
}

/// Incrypto signature with MSE Erase slipped in before MSE Restore.
inline Scenario erase_interleave_scenario(std::uint64_t seed) {
  const auto& p1 = p1_incrypto();
  return {"ERASE-INTERLEAVE", std::string(kIncryptoProfile), p1.id,
          {detail::program_step(p1, "1,1", false, seed), detail::program_step(p1, "1,2", false, seed),
           detail::program_step(erase_program(), "MSE_ERASE", true, seed),
           detail::program_step(p1, "1,3", false, seed)}};
}

}  // namespace cps
