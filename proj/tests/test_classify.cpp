#include <catch2/catch.hpp>

#include <random>

#include "cps/classify.hpp"

using namespace cps;

namespace {

const ResponseApdu kOk = ResponseApdu::with_status(sw::kSuccess);
const ResponseApdu kFail = ResponseApdu::with_status(sw::kConditionsNotSatisfied);

CommandApdu step(const StraightLineProgram& p, std::size_t i) {
  return instantiate_step(p, i, default_bindings(p, i, 0));
}

}  // namespace

TEST_CASE("the certified next step with success is a correct transition") {
  auto s = make_session("s1", p2_cardos(), "c1");
  s.cursor = 1;
  CHECK(classify(s, step(p2_cardos(), 1), kOk) == Classification::CorrectTransition);
  advance(s, step(p2_cardos(), 1), Classification::CorrectTransition);
  CHECK(s.cursor == 2);
  CHECK(s.expected_label() == StepLabel{2, 3});
}

TEST_CASE("a failure status is a detected error and ends the session") {
  auto s = make_session("s1", p2_cardos(), "c1");
  s.cursor = 3;
  const auto chdir = step(p1_incrypto(), 1);
  CHECK(classify(s, chdir, kFail) == Classification::DetectedError);
  advance(s, chdir, Classification::DetectedError);
  CHECK(s.status == SessionStatus::TerminatedOnError);
  CHECK(s.cursor == 3);
  // The certified step itself failing is an error too.
  auto t = make_session("s2", p2_cardos(), "c1");
  CHECK(classify(t, step(p2_cardos(), 0), kFail) == Classification::DetectedError);
}

TEST_CASE("a foreign or modified command accepted by the card is an anomaly") {
  auto s = make_session("s1", p1_incrypto(), "c1");
  s.cursor = 4;
  const auto modified = command_from_hex("0084BD1708");
  CHECK(classify(s, modified, kOk) == Classification::Anomaly);
  advance(s, modified, Classification::Anomaly);
  CHECK(s.cursor == 4);
  CHECK(s.anomalies == 1);
  CHECK(s.status == SessionStatus::Running);
}

TEST_CASE("after an anomaly a later certified step resynchronises forward only") {
  auto s = make_session("s1", p1_incrypto(), "c1");
  s.cursor = 4;  // expecting 1,5 GET_CHAL
  const auto verify = step(p1_incrypto(), 6);
  CHECK(classify(s, verify, kOk) == Classification::Anomaly);  // no anomaly yet: only the next step counts
  s.anomalies = 1;
  CHECK(classify(s, verify, kOk) == Classification::CorrectTransition);
  advance(s, verify, Classification::CorrectTransition);
  CHECK(s.cursor == 7);
  CHECK(classify(s, step(p1_incrypto(), 0), kOk) == Classification::Anomaly);  // never backwards
}

TEST_CASE("empty programs start completed and every success is an anomaly") {
  auto s = make_session("s1", StraightLineProgram{"E", "cardos", {}}, "c1");
  CHECK(s.status == SessionStatus::Completed);
  CHECK(classify(s, step(p2_cardos(), 0), kOk) == Classification::Anomaly);
}

TEST_CASE("verdict codes") {
  for (auto c : {Classification::CorrectTransition, Classification::DetectedError, Classification::Anomaly}) {
    CHECK(parse_verdict(verdict_code(c)) == c);
  }
  CHECK_FALSE(parse_verdict("MAYBE"));
}

TEST_CASE("property: verdicts agree with the status word and sessions evolve monotonically") {
  std::mt19937_64 rng(5);
  std::vector<CommandApdu> pool;
  for (const auto* p : {&p1_incrypto(), &p2_cardos()}) {
    for (std::size_t i = 0; i < p->size(); ++i) pool.push_back(step(*p, i));
  }
  pool.push_back(command_from_hex("0084BD1708"));
  pool.push_back(command_from_hex("81860000021400"));
  for (int trial = 0; trial < 300; ++trial) {
    auto s = make_session("s", trial % 2 ? p1_incrypto() : p2_cardos(), "c");
    for (int n = 0; n < 40; ++n) {
      const auto& cmd = rng() % 3 == 0 ? pool[rng() % pool.size()]
                                       : (s.expects_step() ? step(s.program, s.cursor) : pool[0]);
      const auto& resp = rng() % 8 == 0 ? kFail : kOk;
      const auto v = classify(s, cmd, resp);
      REQUIRE((v == Classification::DetectedError) == !resp.ok());
      const auto before = s;
      advance(s, cmd, v);
      REQUIRE(s.cursor >= before.cursor);
      REQUIRE(s.anomalies >= before.anomalies);
      if (before.status == SessionStatus::Completed || before.status == SessionStatus::TerminatedOnError) {
        REQUIRE(s.status == before.status);
        REQUIRE(s.cursor == before.cursor);
      }
      if (s.status == SessionStatus::Completed) REQUIRE(s.cursor == s.program.size());
      if (v != Classification::CorrectTransition) REQUIRE(s.cursor == before.cursor);
    }
  }
}
