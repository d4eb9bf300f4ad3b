#pragma once

#include <Eigen/Dense>

#include <bit>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ddlab {

// All numeric work is done in 64-bit floats, row-major so that serialized
// matrices and parameter flattening have an obvious byte layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Shortest decimal form that round-trips, so parse(format(x)) == x and
// resumed result stores stay byte-stable.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what = "number") {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("invalid ") + what + ": '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, const char* what = "integer") {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("invalid ") + what + ": '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const char* what = "unsigned integer") {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("invalid ") + what + ": '" + std::string(s) + "'");
  return v;
}

// Binary file primitives. Everything on disk is little-endian regardless of
// the host, written byte by byte.
inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_i64(std::ostream& os, std::int64_t v) { put_u64(os, static_cast<std::uint64_t>(v)); }
inline std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char got[4];
  is.read(got, 4);
  if (!is || std::string_view(got, 4) != std::string_view(magic, 4))
    throw std::runtime_error(std::string("not a ") + what + " file (bad magic)");
}

}  // namespace ddlab
