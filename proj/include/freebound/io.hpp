#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "freebound/errors.hpp"

namespace freebound {

/// Shortest text that round-trips a double: fixed 17 significant digits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comma-separated writer; cells are strings or doubles.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open " + path + " for writing");
    write_cells(header);
  }

  void row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double c : cells) s.push_back(format_double(c));
    write_cells(s);
  }
  void row(const std::vector<std::string>& cells) { write_cells(cells); }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw Error("write failed");
  }

  std::ofstream out_;
};

}  // namespace freebound
