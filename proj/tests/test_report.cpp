#include <catch2/catch.hpp>

#include <filesystem>
#include <sstream>

#include "cps/report.hpp"

using namespace cps;

TEST_CASE("report machine block round trips") {
  const auto r = explore(p2_cardos(), challenge_pair_program(), builtin_profile("cardos"), Strategy::PruneOnError, 1);
  const auto text = format_report(r);
  std::istringstream in(text);
  const auto back = parse_report(in);
  CHECK(back.same_outcomes(r));
  CHECK(back.visited == r.visited);
  CHECK(back.strategy == "prune");
  CHECK(back.program_a == "P2-CARDOS");
  CHECK(text.find("CompletedWithAnomalies: 21") != std::string::npos);
}

TEST_CASE("exhaustive report of the two signature programs shows every schedule") {
  const auto r = explore(p1_incrypto(), p2_cardos(), builtin_profile("cardos"), Strategy::Exhaustive, 0);
  const auto text = format_report(r);
  CHECK(text.find("total=3003\n") != std::string::npos);
  CHECK(text.find("visited=3003\n") != std::string::npos);
}

TEST_CASE("prune report visits fewer than the total") {
  const auto r = explore(p1_incrypto(), p2_cardos(), builtin_profile("incrypto"), Strategy::PruneOnError, 0);
  std::istringstream in(format_report(r));
  const auto back = parse_report(in);
  CHECK(back.visited < back.total);
}

TEST_CASE("empty exploration report") {
  const StraightLineProgram empty{"EMPTY", "cardos", {}};
  const auto r = explore(empty, empty, builtin_profile("cardos"), Strategy::Exhaustive, 0);
  const auto text = format_report(r);
  CHECK(text.find("total=1\nvisited=1\n") != std::string::npos);
}

TEST_CASE("machine block ordering is deterministic") {
  auto block = [](const std::string& text) { return text.substr(text.find("#BEGIN-REPORT")); };
  const auto a = explore(p1_incrypto(), challenge_pair_program(), builtin_profile("incrypto"), Strategy::MemoizedByState, 5);
  const auto b = explore(p1_incrypto(), challenge_pair_program(), builtin_profile("incrypto"), Strategy::MemoizedByState, 5);
  CHECK(block(format_report(a)) == block(format_report(b)));
}

TEST_CASE("emit_report writes the file and parse errors are reported") {
  const auto path = (std::filesystem::temp_directory_path() / "cps_report_test.txt").string();
  const auto r = explore(p2_cardos(), challenge_pair_program(), builtin_profile("cardos"), Strategy::Exhaustive, 1);
  const auto text = emit_report(r, path);
  CHECK(load_report(path).same_outcomes(r));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(emit_report(r, "/nonexistent-dir/report.txt"), Error);

  std::istringstream no_block("hello\n");
  CHECK_THROWS_AS(parse_report(no_block), Error);
  std::istringstream unterminated("#BEGIN-REPORT\ntotal=1\n");
  CHECK_THROWS_AS(parse_report(unterminated), ConfigError);
  std::istringstream bad("#BEGIN-REPORT\ntotal=x\n#END-REPORT\n");
  CHECK_THROWS_AS(parse_report(bad), ConfigError);
  std::istringstream bad_schedule("#BEGIN-REPORT\nanomalous=ABC:2\n#END-REPORT\n");
  CHECK_THROWS_AS(parse_report(bad_schedule), ConfigError);
}
