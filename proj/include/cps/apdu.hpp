#pragma once

// Short-form ISO 7816-4 command and response APDUs.
//
// Command layout: CLA INS P1 P2 [Lc data...] [Le]. Lc is never carried
// explicitly; it is derived from the data length, so encode/decode form a
// bijection over the four short cases:
//   case 1   header only
//   case 2S  header + Le
//   case 3S  header + Lc + data
//   case 4S  header + Lc + data + Le
// Extended-length APDUs are not supported.

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "cps/bytes.hpp"

namespace cps {

class MalformedApdu : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kMaxShortData = 255;

struct CommandApdu {
  Byte cla = 0;
  Byte ins = 0;
  Byte p1 = 0;
  Byte p2 = 0;
  Bytes data;
  std::optional<Byte> le;

  friend bool operator==(const CommandApdu&, const CommandApdu&) = default;
  friend auto operator<=>(const CommandApdu&, const CommandApdu&) = default;
};

namespace sw {
inline constexpr std::uint16_t kSuccess = 0x9000;
inline constexpr std::uint16_t kInsNotSupported = 0x6D00;
inline constexpr std::uint16_t kIncorrectP1P2 = 0x6A86;
inline constexpr std::uint16_t kFileNotFound = 0x6A82;
inline constexpr std::uint16_t kReferencedDataNotFound = 0x6A88;
inline constexpr std::uint16_t kSecurityStatus = 0x6982;
inline constexpr std::uint16_t kConditionsNotSatisfied = 0x6985;
inline constexpr std::uint16_t kPinMismatch = 0x6300;
}  // namespace sw

struct ResponseApdu {
  Bytes data;
  Byte sw1 = 0x90;
  Byte sw2 = 0x00;

  static ResponseApdu with_status(std::uint16_t status, Bytes data = {}) {
    return ResponseApdu{std::move(data), static_cast<Byte>(status >> 8),
                        static_cast<Byte>(status & 0xFF)};
  }

  std::uint16_t status() const noexcept { return static_cast<std::uint16_t>((sw1 << 8) | sw2); }
  bool ok() const noexcept { return sw1 == 0x90 && sw2 == 0x00; }

  friend bool operator==(const ResponseApdu&, const ResponseApdu&) = default;
};

inline std::size_t encoded_size(const CommandApdu& cmd) noexcept {
  return 4 + (cmd.data.empty() ? 0 : 1 + cmd.data.size()) + (cmd.le ? 1 : 0);
}

inline Bytes encode_command(const CommandApdu& cmd) {
  if (cmd.data.size() > kMaxShortData) {
    throw MalformedApdu("data field of " + std::to_string(cmd.data.size()) +
                        " bytes does not fit a short APDU");
  }
  Bytes out{cmd.cla, cmd.ins, cmd.p1, cmd.p2};
  out.reserve(encoded_size(cmd));
  if (!cmd.data.empty()) {
    out.push_back(static_cast<Byte>(cmd.data.size()));
    out.insert(out.end(), cmd.data.begin(), cmd.data.end());
  }
  if (cmd.le) out.push_back(*cmd.le);
  return out;
}

inline CommandApdu decode_command(ByteView raw) {
  if (raw.size() < 4) {
    throw MalformedApdu("command APDU shorter than its 4-byte header (" +
                        std::to_string(raw.size()) + " bytes)");
  }
  CommandApdu cmd{raw[0], raw[1], raw[2], raw[3], {}, std::nullopt};
  if (raw.size() == 4) return cmd;
  if (raw.size() == 5) {
    cmd.le = raw[4];
    return cmd;
  }
  const std::size_t lc = raw[4];
  if (lc == 0) {
    throw MalformedApdu("Lc of 00 with a body is not a short APDU (length " +
                        std::to_string(raw.size()) + ")");
  }
  if (raw.size() != 5 + lc && raw.size() != 6 + lc) {
    throw MalformedApdu("length " + std::to_string(raw.size()) + " matches no short case for Lc=" +
                        std::to_string(lc));
  }
  cmd.data.assign(raw.begin() + 5, raw.begin() + 5 + static_cast<std::ptrdiff_t>(lc));
  if (raw.size() == 6 + lc) cmd.le = raw.back();
  return cmd;
}

inline Bytes encode_response(const ResponseApdu& resp) {
  Bytes out(resp.data);
  out.push_back(resp.sw1);
  out.push_back(resp.sw2);
  return out;
}

inline ResponseApdu decode_response(ByteView raw) {
  if (raw.size() < 2) {
    throw MalformedApdu("response APDU lacks its two status bytes");
  }
  return ResponseApdu{Bytes(raw.begin(), raw.end() - 2), raw[raw.size() - 2], raw.back()};
}

inline std::string to_hex(const CommandApdu& cmd) { return hex_format(encode_command(cmd)); }
inline CommandApdu command_from_hex(std::string_view text) { return decode_command(hex_parse(text)); }

inline std::string status_hex(const ResponseApdu& resp) {
  const Byte bytes[] = {resp.sw1, resp.sw2};
  return hex_format(bytes);
}

}  // namespace cps
