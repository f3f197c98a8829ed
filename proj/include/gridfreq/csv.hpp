#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridfreq/types.hpp"

namespace gridfreq {

/// Number formatted to 9 significant digits, '.' decimal separator.
inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// RFC-4180 CSV writer: header row, CRLF line endings, fields quoted only
/// when needed. Numeric fields use 9 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) { row(std::move(header)); }

  CsvWriter& field(const std::string& s) {
    pending_.push_back(quote(s));
    return *this;
  }
  CsvWriter& field(double v) {
    pending_.push_back(fmt9(v));
    return *this;
  }
  CsvWriter& field(int v) {
    pending_.push_back(std::to_string(v));
    return *this;
  }

  void end_row() {
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      if (i) out_ << ',';
      out_ << pending_[i];
    }
    out_ << "\r\n";
    pending_.clear();
  }

  void row(std::vector<std::string> fields) {
    for (auto& f : fields) pending_.push_back(quote(f));
    end_row();
  }

  std::string str() const { return out_.str(); }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw validation_error("csv: cannot open " + path + " for writing");
    f << out_.str();
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return q;
  }

  std::ostringstream out_;
  std::vector<std::string> pending_;
};

/// Minimal CSV reader for the plain numeric tables this project ships:
/// splits on commas, trims spaces and CR, skips blank lines.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw validation_error("csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    for (auto& s : fields) {
      while (!s.empty() && s.front() == ' ') s.erase(s.begin());
      while (!s.empty() && s.back() == ' ') s.pop_back();
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace gridfreq
