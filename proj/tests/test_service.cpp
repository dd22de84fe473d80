#include <catch2/catch.hpp>

#include <filesystem>
#include <sstream>

#include "cps/service.hpp"

using namespace cps;

namespace {

Service make(const char* profile, WatchdogPolicy watchdog = WatchdogPolicy::Disabled) {
  return Service(ServiceConfig{0, {{"c1", profile}}, watchdog});
}

}  // namespace

TEST_CASE("APDU replies carry data and status word") {
  auto s = make("cardos");
  CHECK(s.handle_line("APDU c1 00A40000FF").text == "OK  9000");
  CHECK(s.handle_line("APDU c1 0022F1B6054D0083013100").text == "OK  6985");
  const auto chal = s.handle_line("APDU c1 0084000008").text;
  CHECK(chal.size() == 3 + 16 + 5);
  CHECK(chal.ends_with(" 9000"));
}

TEST_CASE("an erase followed by the certified restore step is refused") {
  auto s = make("incrypto");
  CHECK(s.handle_line("APDU c1 0022F403").text == "OK  9000");
  CHECK(s.handle_line("STEP c1 P1 MSE_RESTORE").text == "OK  6985");
}

TEST_CASE("STEP instantiates built-in program steps") {
  auto s = make("cardos");
  for (const char* step : {"MF", "MSE_RESTORE", "MSE_SET", "VERIFY"}) {
    CHECK(s.handle_line(std::string("STEP c1 P2-CARDOS ") + step).text == "OK  9000");
  }
  const auto sig = s.handle_line("STEP c1 P2 2,5").text;
  CHECK(sig.size() == 3 + 256 + 5);
  CHECK(s.router().session(s.native_session("c1")).status == SessionStatus::Completed);
  CHECK(s.handle_line("STEP c1 P9 MF").text.starts_with("ERR SYNTAX unknown program"));
  CHECK(s.handle_line("STEP c1 P2 NOPE").text.starts_with("ERR SYNTAX unknown step"));
}

TEST_CASE("RESET returns the answer to reset and opens a new session") {
  auto s = make("cardos");
  const auto before = s.native_session("c1");
  CHECK(s.handle_line("RESET c1").text == "OK " + hex_format(builtin_profile("cardos")->reset_response));
  CHECK(s.native_session("c1") != before);
}

TEST_CASE("STATUS summarises card and session on one line") {
  auto s = make("incrypto");
  s.handle_line("STEP c1 P1 MF");
  s.handle_line("APDU c1 0022F40300");
  const auto line = s.handle_line("STATUS c1").text;
  CHECK(line.starts_with("OK card=c1 "));
  CHECK(line.find("seo=destroyed") != std::string::npos);
  CHECK(line.find("cursor=1/10") != std::string::npos);
  CHECK(line.find("anomalies=1") != std::string::npos);
  CHECK(line.find('\n') == std::string::npos);
}

TEST_CASE("errors are replies") {
  auto s = make("cardos");
  CHECK(s.handle_line("FROB c1").text == "ERR SYNTAX unknown verb");
  CHECK(s.handle_line("").text.starts_with("ERR SYNTAX"));
  CHECK(s.handle_line("APDU c1").text.starts_with("ERR SYNTAX"));
  CHECK(s.handle_line("APDU c9 00A40000FF").text == "ERR NOCARD c9");
  CHECK(s.handle_line("STEP c9 P2 MF").text == "ERR NOCARD c9");
  CHECK(s.handle_line("RESET c9").text == "ERR NOCARD c9");
  CHECK(s.handle_line("STATUS c9").text == "ERR NOCARD c9");
  CHECK(s.handle_line("APDU c1 00A4000").text.starts_with("ERR BADHEX"));
  CHECK(s.handle_line("APDU c1 ZZ").text.starts_with("ERR BADHEX"));
  CHECK(s.handle_line("APDU c1 00A4000000FF").text.starts_with("ERR BADHEX"));
  CHECK(s.handle_line(std::string(5000, 'A')).text == "ERR SYNTAX line exceeds 4096 bytes");
  const auto quit = s.handle_line("QUIT");
  CHECK(quit.text == "OK BYE");
  CHECK(quit.close);
  CHECK(s.handle_line("APDU c1 00A40000FF\r").text == "OK  9000");
}

TEST_CASE("the watchdog refuses a blocked session") {
  auto s = make("cardos", WatchdogPolicy::BlockOnFirst);
  CHECK(s.handle_line("STEP c1 P2 MF").text == "OK  9000");
  CHECK(s.handle_line("STEP c1 P1 GET_CHAL").text.starts_with("OK "));
  CHECK(s.handle_line("STEP c1 P2 MSE_RESTORE").text.starts_with("ERR BLOCKED"));
}

TEST_CASE("command files") {
  const auto file = load_command_file(CPS_DATA_DIR "/scripts/challenge-interleave.cmd");
  CHECK(file.config.seed == 7);
  CHECK(file.config.cards == std::vector<std::pair<std::string, std::string>>{{"c1", "cardos"}});
  CHECK(file.lines.size() == 7);
  const auto path = (std::filesystem::temp_directory_path() / "cps_cmdfile_test.trace").string();
  const auto run = run_command_file(file, path);
  CHECK(run.exchanges.size() == 7);
  const auto trace = read_trace(path);
  CHECK(trace.records == run.service->router().trace());
  std::filesystem::remove(path);

  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_command_file(in);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return 999;
  };
  CHECK(line_of("@seed x\n") == 1);
  CHECK(line_of("@card c1\n") == 1);
  CHECK(line_of("@watchdog sometimes\n") == 1);
  CHECK(line_of("@card c1 cardos\nAPDU c1 00A40000FF\n@seed 3\n") == 3);
  CHECK(line_of("@colour red\n") == 1);
}

TEST_CASE("QUIT stops a command file") {
  std::istringstream in("@card c1 cardos\nSTEP c1 P2 MF\nQUIT\nSTEP c1 P2 MSE_RESTORE\n");
  const auto run = run_command_file(parse_command_file(in));
  CHECK(run.exchanges.size() == 2);
}
