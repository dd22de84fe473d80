#include <catch2/catch.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cps/cli.hpp"

using namespace cps;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cps");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string data(const std::string& rel) { return std::string(CPS_DATA_DIR) + "/" + rel; }

}  // namespace

TEST_CASE("run of a certified program exits 0 with five OK verdicts and a signature") {
  const auto r = cli({"run", "P2-CARDOS", "cardos", "--seed", "7"});
  CHECK(r.code == 0);
  std::size_t ok = 0;
  for (std::size_t pos = 0; (pos = r.out.find(" OK\n", pos)) != std::string::npos; ++pos) ++ok;
  CHECK(ok == 5);
  CHECK(r.out.find("signature 128 bytes") != std::string::npos);
}

TEST_CASE("run of the wrong program exits 3") {
  CHECK(cli({"run", "P1-INCRYPTO", "cardos"}).code == 3);
}

TEST_CASE("replay exit codes follow the verdicts") {
  CHECK(cli({"replay", data("scripts/challenge-interleave.cmd")}).code == 2);
  CHECK(cli({"replay", data("scripts/modified-commands.cmd")}).code == 2);
  CHECK(cli({"replay", data("scripts/erase-interleave.cmd")}).code == 3);
}

TEST_CASE("a recorded trace replays identically") {
  const auto path = (std::filesystem::temp_directory_path() / "cps_cli_replay.trace").string();
  CHECK(cli({"replay", data("scripts/challenge-interleave.cmd"), "--trace", path}).code == 2);
  const auto r = cli({"replay", path});
  CHECK(r.code == 2);
  CHECK(r.out.find("reproduces the recorded trace (7 records)") != std::string::npos);
  const auto summary = cli({"report", path});
  CHECK(summary.code == 0);
  CHECK(summary.out.find("5 OK, 0 ERR, 2 ANOM") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("explore, report, sweep and loopback") {
  const auto path = (std::filesystem::temp_directory_path() / "cps_cli_report.txt").string();
  const auto e = cli({"explore", "P1", "P2", "cardos", "--strategy", "prune", "--report", path});
  CHECK(e.code == 0);
  CHECK(e.out.find("total=3003") != std::string::npos);
  const auto rep = cli({"report", path});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("schedules: 3003 total") != std::string::npos);
  std::filesystem::remove(path);

  CHECK(cli({"explore", "P1", "P2", "cardos", "--strategy", "guess"}).code == 1);
  CHECK(cli({"explore", "P1", "P2", "cardos", "--cap", "10"}).code == 1);

  const auto s = cli({"sweep-challenges"});
  CHECK(s.code == 2);
  CHECK(s.out.find("all points complete with anomalies: yes") != std::string::npos);

  const auto l = cli({"loopback"});
  CHECK(l.code == 2);
  CHECK(l.out.find("error status words=0") != std::string::npos);
  CHECK(l.out.find("error status words=1") == std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"run", "P2-CARDOS"}).code == 1);
  CHECK(cli({"run", "P2-CARDOS", "nosuchcard"}).code == 1);
  CHECK(cli({"run", "P2-CARDOS", "cardos", "--watchdog", "sometimes"}).code == 1);
  CHECK(cli({"replay", "/no/such/file"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("the installed binary honours the exit-code contract") {
  const std::string bin = CPS_BINARY;
  auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("run P2-CARDOS cardos --seed 7") == 0);
  CHECK(status("replay " + data("scripts/challenge-interleave.cmd")) == 2);
  CHECK(status("replay " + data("scripts/erase-interleave.cmd")) == 3);
  CHECK(status("bogus") == 1);
}
