#include "lilad/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lilad {

std::string format_f64(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

double parse_f64(const std::string& s) {
  const char* c = s.c_str();
  char* end = nullptr;
  double d = std::strtod(c, &end);
  if (end == c || (end && *end != '\0'))
    throw FormatError("expected a float, got '" + s + "'");
  return d;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw DataError("short write to '" + path + "'");
}

}  // namespace lilad
