#pragma once

// Reference computations the library does not share code with.

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cps/apdu.hpp"

namespace oracle {

// Schoolbook decimal arithmetic on digit strings.
inline std::string dec_mul(const std::string& a, const std::string& b) {
  std::vector<int> acc(a.size() + b.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      acc[i + j + 1] += (a[i] - '0') * (b[j] - '0');
    }
  }
  for (std::size_t k = acc.size() - 1; k > 0; --k) {
    acc[k - 1] += acc[k] / 10;
    acc[k] %= 10;
  }
  std::string out;
  for (int d : acc) {
    if (out.empty() && d == 0) continue;
    out.push_back(static_cast<char>('0' + d));
  }
  return out.empty() ? "0" : out;
}

inline std::string dec_pow2(unsigned n) {
  std::string out = "1";
  for (unsigned i = 0; i < n; ++i) out = dec_mul(out, "2");
  return out;
}

inline std::uint64_t factorial(unsigned n) {
  if (n > 20) throw std::overflow_error("factorial beyond 20 needs big integers");
  std::uint64_t f = 1;
  for (unsigned i = 2; i <= n; ++i) f *= i;
  return f;
}

inline std::uint64_t binomial_by_factorials(unsigned n, unsigned k) {
  return factorial(n) / (factorial(k) * factorial(n - k));
}

// Every word with l A's and k B's, by scanning all bit masks.
inline std::vector<std::string> merges_by_masks(unsigned l, unsigned k) {
  std::vector<std::string> out;
  const unsigned n = l + k;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<unsigned>(__builtin_popcount(mask)) != k) continue;
    std::string w;
    for (unsigned i = 0; i < n; ++i) w.push_back((mask >> (n - 1 - i)) & 1u ? 'B' : 'A');
    out.push_back(w);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ISO 7816-4 short case encoding written out per case.
inline cps::Bytes encode(const cps::CommandApdu& c) {
  cps::Bytes out{c.cla, c.ins, c.p1, c.p2};
  const bool has_data = !c.data.empty();
  if (!has_data && !c.le) return out;  // case 1
  if (!has_data) {                     // case 2S
    out.push_back(*c.le);
    return out;
  }
  out.push_back(static_cast<cps::Byte>(c.data.size()));  // case 3S / 4S
  for (auto b : c.data) out.push_back(b);
  if (c.le) out.push_back(*c.le);
  return out;
}

inline cps::CommandApdu random_command(std::mt19937_64& rng, int apdu_case) {
  auto byte = [&rng] { return static_cast<cps::Byte>(rng() & 0xFF); };
  cps::CommandApdu c{byte(), byte(), byte(), byte(), {}, std::nullopt};
  if (apdu_case == 3 || apdu_case == 4) {
    c.data.resize(1 + rng() % 255);
    for (auto& b : c.data) b = byte();
  }
  if (apdu_case == 2 || apdu_case == 4) c.le = byte();
  return c;
}

}  // namespace oracle
