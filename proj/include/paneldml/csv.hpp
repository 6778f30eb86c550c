#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "paneldml/common.hpp"

// Plain comma-separated files: no quoting, one header row, uniform column
// counts. Readers collect every problem before throwing.

namespace paneldml {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty file: " + path);
  t.header = split_csv_line(line);
  std::vector<std::string> problems;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      problems.push_back(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(t.header.size()) + " fields, got " +
                         std::to_string(cells.size()));
      continue;
    }
    t.rows.push_back(std::move(cells));
  }
  if (!problems.empty()) throw validation_error(std::move(problems));
  return t;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && *(e - 1) == ' ') --e;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e && b != e;
}

inline bool parse_int(const std::string& s, long long& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && *(e - 1) == ' ') --e;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e && b != e;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw data_error("cannot open file for writing: " + path);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  static std::string num(double v) { return format_double(v); }

 private:
  std::ofstream out_;
};

}  // namespace paneldml
