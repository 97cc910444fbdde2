#pragma once
// Small strict CSV reader for the project's documented file formats.
// Comma-separated, UTF-8, LF or CRLF line endings, no quoting (none of the
// formats needs embedded commas). Decimal point only.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pffp/errors.hpp"

namespace pffp::csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
    fields.back().pop_back();
  }
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data rows, header excluded
};

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Table table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw DataError(path + ": empty file");
  return table;
}

inline void require_header(const Table& table, const std::vector<std::string>& expected,
                           const std::string& path) {
  if (table.header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) want += ',';
      want += expected[i];
    }
    throw DataError(path + ": unexpected header, want '" + want + "'");
  }
}

inline double parse_double(const std::string& s, const std::string& what) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw DataError("invalid number '" + s + "' for " + what);
  }
  return value;
}

inline long parse_long(const std::string& s, const std::string& what) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  long value = 0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw DataError("invalid integer '" + s + "' for " + what);
  }
  return value;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    double parsed = 0.0;
    std::from_chars(shorter, shorter + std::char_traits<char>::length(shorter), parsed);
    if (parsed == v) return shorter;
  }
  return buf;
}

}  // namespace pffp::csv
