// Copyright 2026 The tacorl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace taco {

// Shortest round-trippable decimal form; identical inputs format identically,
// which keeps logged metrics byte-stable across reruns.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Trim to the shortest representation that still round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[40];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    double parsed = 0.0;
    std::sscanf(shorter, "%lf", &parsed);
    if (parsed == v) return shorter;
  }
  return buf;
}

class CsvWriter {
 public:
  CsvWriter() = default;

  CsvWriter(const std::string& path, const std::vector<std::string>& columns,
            bool append = false)
      : n_cols_(columns.size()) {
    bool write_header = true;
    if (append) {
      std::ifstream probe(path);
      write_header = !probe.good() || probe.peek() == EOF;
    }
    os_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!os_) throw std::runtime_error("cannot open csv for write: " + path);
    if (write_header) {
      for (size_t i = 0; i < columns.size(); ++i) {
        if (i) os_ << ',';
        os_ << columns[i];
      }
      os_ << '\n';
    }
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != n_cols_)
      throw std::runtime_error("csv row has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(n_cols_));
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
  size_t n_cols_ = 0;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv column not found: " + name);
  }

  double num(size_t row, const std::string& name) const {
    return std::stod(rows[row][static_cast<size_t>(col(name))]);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open csv: " + path);
  CsvTable table;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (header) {
      table.columns = std::move(cells);
      header = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

}  // namespace taco
