// Copyright 2026 The mchain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mchain/errors.hpp"

namespace mchain::io {

/// Shortest round-trip decimal form of x, independent of the C locale.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (text == "nan") return std::nan("");
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ValidationError("not a number: '" + std::string(text) + "'");
  return value;
}

/// Accumulates CSV rows in memory; written out in one piece.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

  CsvTable& row() {
    pending_.clear();
    return *this;
  }
  CsvTable& operator<<(double x) { return cell(format_double(x)); }
  CsvTable& operator<<(int x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(long long x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(std::size_t x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(bool x) { return cell(x ? "true" : "false"); }
  CsvTable& operator<<(const std::string& s) { return cell(s); }
  CsvTable& operator<<(const char* s) { return cell(s); }

  /// Closes the current row.
  void end_row() {
    detail::require(pending_.size() == columns_, "CsvTable: row has the wrong number of cells");
    add_row(pending_);
    pending_.clear();
  }

  const std::string& text() const { return text_; }
  std::size_t rows() const { return rows_ - 1; }

 private:
  CsvTable& cell(std::string s) {
    pending_.push_back(std::move(s));
    return *this;
  }
  void add_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
    ++rows_;
  }

  std::size_t columns_;
  std::vector<std::string> pending_;
  std::string text_;
  std::size_t rows_ = 0;
};

/// Splits one CSV line on commas (no quoting; the tables written here never
/// need it).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a CSV file into a header and rows of cells.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ValidationError("CSV lacks column '" + name + "'");
  }
};

inline CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  CsvData data;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (first) {
      data.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != data.header.size())
        throw ValidationError(path.string() + ": row with " + std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(data.header.size()));
      data.rows.push_back(std::move(cells));
    }
  }
  if (first) throw ValidationError(path.string() + ": empty file");
  return data;
}

/// Writes `contents` to `path` through a temporary file and a rename, so a
/// reader never sees a half-written file.
inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mchain::io
