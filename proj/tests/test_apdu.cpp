#include <catch2/catch.hpp>

#include "cps/apdu.hpp"
#include "oracles.hpp"

using namespace cps;

TEST_CASE("hex is canonical uppercase without separators") {
  const Bytes b{0x00, 0xA4, 0x0f, 0xFF};
  CHECK(hex_format(b) == "00A40FFF");
  CHECK(hex_parse("00a40fff") == b);
  CHECK(hex_parse("").empty());
  CHECK_THROWS_AS(hex_parse("ABC"), HexError);
  CHECK_THROWS_AS(hex_parse("00 A4"), HexError);
  CHECK_THROWS_AS(hex_parse("0G"), HexError);
}

TEST_CASE("the four short cases encode as expected") {
  CHECK(to_hex(CommandApdu{0x00, 0xA4, 0x00, 0x00, {}, std::nullopt}) == "00A40000");
  CHECK(to_hex(CommandApdu{0x00, 0xA4, 0x00, 0x00, {}, 0xFF}) == "00A40000FF");
  CHECK(to_hex(CommandApdu{0x80, 0x86, 0x00, 0x00, {0x14, 0x00}, std::nullopt}) == "80860000021400");
  CHECK(to_hex(CommandApdu{0x00, 0xA4, 0x00, 0x00, {0x14, 0x00}, 0xFF}) == "00A40000021400FF");
}

TEST_CASE("Le of 00 is carried literally") {
  const auto c = command_from_hex("0022F33000");
  CHECK(c.data.empty());
  REQUIRE(c.le.has_value());
  CHECK(*c.le == 0x00);
  CHECK(to_hex(c) == "0022F33000");
}

TEST_CASE("codec round trip, 1000 random commands across all cases") {
  std::mt19937_64 rng(20240611);
  int per_case[5] = {};
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const int apdu_case = 1 + i % 4;
    const auto cmd = oracle::random_command(rng, apdu_case);
    const auto raw = encode_command(cmd);
    if (raw != oracle::encode(cmd) || decode_command(raw) != cmd || raw.size() != encoded_size(cmd)) ++failures;
    ++per_case[apdu_case];
  }
  CHECK(failures == 0);
  for (int c = 1; c <= 4; ++c) CHECK(per_case[c] == 250);
}

TEST_CASE("malformed commands are rejected") {
  const std::vector<std::string> corpus = {
      "",            // empty
      "00",          // 1 byte
      "00A4",        // 2 bytes
      "00A400",      // 3 bytes
      "00A4000000FF",       // Lc=0 followed by a byte
      "00A400000000",       // Lc=0 and Le
      "00A40000021400FFFF", // one byte too many for case 4
      "00A4000003140",      // odd hex (caught by the hex layer)
      "00A400000314",       // Lc=3 but one data byte
      "00A40000FF00",       // Lc=255 but one data byte
  };
  for (const auto& hex : corpus) {
    INFO(hex);
    CHECK_THROWS_AS(command_from_hex(hex), Error);
  }
  CHECK_THROWS_AS(decode_command(hex_parse("00A400000314000000AA")), MalformedApdu);
  CHECK_THROWS_AS(encode_command(CommandApdu{0, 0, 0, 0, Bytes(256, 0), std::nullopt}), MalformedApdu);
}

TEST_CASE("every truncation of a valid case-4 command is rejected or reads as a shorter case") {
  const auto raw = hex_parse("0C20009A083132333435363738");
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const ByteView cut(raw.data(), n);
    if (n == 4 || n == 5) {
      CHECK_NOTHROW(decode_command(cut));
    } else {
      CHECK_THROWS_AS(decode_command(cut), MalformedApdu);
    }
  }
}

TEST_CASE("responses split data from the status word") {
  const auto r = decode_response(hex_parse("01029000"));
  CHECK(r.data == Bytes{0x01, 0x02});
  CHECK(r.ok());
  CHECK(status_hex(r) == "9000");
  CHECK(encode_response(r) == hex_parse("01029000"));
  CHECK_FALSE(ResponseApdu::with_status(sw::kConditionsNotSatisfied).ok());
  CHECK(ResponseApdu::with_status(0x6985).status() == 0x6985);
  CHECK_THROWS_AS(decode_response(hex_parse("90")), MalformedApdu);
}
