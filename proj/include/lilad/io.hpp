#pragma once

// Little-endian binary primitives and small file helpers shared by the pool
// and checkpoint containers.  Little-endian is the canonical on-disk order;
// big-endian hosts byte-swap on both paths.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lilad/errors.hpp"
#include "lilad/types.hpp"

namespace lilad {

inline std::uint64_t to_le_u64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
  return r;
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  std::uint64_t le = to_le_u64(v);
  os.write(reinterpret_cast<const char*>(&le), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t le = 0;
  if (!is.read(reinterpret_cast<char*>(&le), 8))
    throw FormatError("truncated stream while reading u64");
  return to_le_u64(le);
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline void write_f64_block(std::ostream& os, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) write_f64(os, data[i]);
}

inline void read_f64_block(std::istream& is, double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = read_f64(is);
}

// Shortest exact decimal for a double (round-trips bit-exactly).
std::string format_f64(double d);
double parse_f64(const std::string& s);  // FormatError on garbage

// Whole-file helpers.
std::string read_text_file(const std::string& path);  // DataError if unreadable
void write_text_file(const std::string& path, const std::string& content);

}  // namespace lilad
