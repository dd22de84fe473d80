#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "client.hpp"
#include "cps/scenarios.hpp"
#include "cps/server.hpp"

using namespace cps;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Service + server on a free port, accepting in the background.
struct Daemon {
  explicit Daemon(ServiceConfig config, const std::string& trace_path = {}) : service(std::move(config)) {
    if (!trace_path.empty()) {
      writer = std::make_unique<TraceWriter>(trace_path, service.config().seed, service.card_list());
      service.attach_trace(*writer);
    }
    server = std::make_unique<TcpServer>(service, 0);
    thread = std::thread([this] { server->run(); });
  }
  ~Daemon() {
    server->stop();
    thread.join();
  }
  Service service;
  std::unique_ptr<TraceWriter> writer;
  std::unique_ptr<TcpServer> server;
  std::thread thread;
};

}  // namespace

TEST_CASE("scripted challenge interleave over TCP writes the in-process trace byte for byte") {
  const auto path = (std::filesystem::temp_directory_path() / "cps_daemon_replay.trace").string();
  {
    Daemon d(ServiceConfig{7, {{"c1", "cardos"}}}, path);
    LineClient client(d.server->port());
    const auto file = load_command_file(CPS_DATA_DIR "/scripts/challenge-interleave.cmd");
    for (const auto& [line, text] : file.lines) CHECK(client.request(text).starts_with("OK "));
    CHECK(client.request("QUIT") == "OK BYE");
  }
  Router router(7);
  router.add_card("c1", builtin_profile("cardos"));
  const auto sid = router.open_session(p2_cardos(), "c1");
  for (const auto& c : challenge_interleave_scenario(7).commands) router.dispatch(sid, c.command);
  CHECK(slurp(path) == trace_text(TraceFile{7, {{"c1", "cardos"}}, router.trace()}));
  std::filesystem::remove(path);
}

TEST_CASE("QUIT closes only the quitting connection") {
  Daemon d(ServiceConfig{0, {{"c1", "cardos"}}});
  LineClient a(d.server->port()), b(d.server->port());
  CHECK(a.request("QUIT") == "OK BYE");
  a.read_line();
  CHECK(a.eof());
  CHECK(b.request("APDU c1 00A40000FF") == "OK  9000");
}

TEST_CASE("every request line gets exactly one reply line, errors included") {
  Daemon d(ServiceConfig{0, {{"c1", "cardos"}}});
  LineClient c(d.server->port());
  c.send_raw("FROB c1\nAPDU c9 00A40000FF\nAPDU c1 XYZ\n" + std::string(5000, 'A') + "\nAPDU c1 00A40000FF\n");
  CHECK(c.read_line() == "ERR SYNTAX unknown verb");
  CHECK(c.read_line() == "ERR NOCARD c9");
  CHECK(c.read_line().starts_with("ERR BADHEX"));
  CHECK(c.read_line() == "ERR SYNTAX line exceeds 4096 bytes");
  CHECK(c.read_line() == "OK  9000");
}

TEST_CASE("two clients on one card are serialised per command") {
  const auto path = (std::filesystem::temp_directory_path() / "cps_daemon_concurrent.trace").string();
  {
    Daemon d(ServiceConfig{3, {{"c1", "incrypto"}}}, path);
    auto worker = [&d] {
      LineClient c(d.server->port());
      for (int i = 0; i < 100; ++i) {
        const auto reply = c.request("APDU c1 0084000008");
        REQUIRE(reply.size() == 3 + 16 + 5);
      }
    };
    std::thread t1(worker), t2(worker);
    t1.join();
    t2.join();
  }
  const auto trace = read_trace(path);
  REQUIRE(trace.records.size() == 200);
  Card replica(builtin_profile("incrypto"), 3);
  for (const auto& r : trace.records) REQUIRE(replica.execute(r.command) == r.response);
  std::filesystem::remove(path);
}

TEST_CASE("binding a port in use fails") {
  Daemon d(ServiceConfig{0, {{"c1", "cardos"}}});
  Service other(ServiceConfig{0, {{"c1", "cardos"}}});
  CHECK_THROWS_AS(TcpServer(other, d.server->port()), ServerError);
}
