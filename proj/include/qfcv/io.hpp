#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qfcv/core.hpp"

namespace qfcv {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// A series read from CSV together with its time stamps.
struct TimedSeries {
  std::vector<std::int64_t> t;
  TimeSeries series;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t row, const std::string& column) {
  cell = trim(cell);
  if (cell.empty()) {
    throw ValidationError("csv row " + std::to_string(row) + ": empty value in column '" + column + "'");
  }
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw ValidationError("csv row " + std::to_string(row) + ": non-numeric value '" +
                          std::string(cell) + "' in column '" + column + "'");
  }
  return v;
}

}  // namespace detail

/// Reads `t,x1,...,xp,y` (p >= 0). Lines starting with '#' are comments. Rows are numbered from 1
/// after the header in error messages.
inline TimedSeries read_series_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const std::string_view v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    for (auto c : detail::split_csv_line(v)) header.emplace_back(detail::trim(c));
    break;
  }
  if (header.empty()) throw ValidationError("csv: missing header row");
  if (header.size() < 2 || header.front() != "t" || header.back() != "y") {
    throw ValidationError("csv: header must be t,x1,...,xp,y");
  }
  for (std::size_t j = 1; j + 1 < header.size(); ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw ValidationError("csv: header column " + std::to_string(j + 1) + " is '" + header[j] +
                            "', expected 'x" + std::to_string(j) + "'");
    }
  }
  const std::size_t p = header.size() - 2;

  TimedSeries out;
  std::vector<TimePoint> points;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string_view v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    ++row;
    const auto cells = detail::split_csv_line(v);
    if (cells.size() != header.size()) {
      throw ValidationError("csv row " + std::to_string(row) + ": " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
    }
    const std::string_view tc = detail::trim(cells[0]);
    std::int64_t t = 0;
    const auto res = std::from_chars(tc.data(), tc.data() + tc.size(), t);
    if (tc.empty() || res.ec != std::errc() || res.ptr != tc.data() + tc.size()) {
      throw ValidationError("csv row " + std::to_string(row) + ": t must be an integer, got '" +
                            std::string(tc) + "'");
    }
    if (!out.t.empty() && t <= out.t.back()) {
      throw ValidationError("csv row " + std::to_string(row) + ": t=" + std::to_string(t) +
                            " is not greater than the previous t=" + std::to_string(out.t.back()));
    }
    TimePoint z;
    z.x.reserve(p);
    for (std::size_t j = 0; j < p; ++j) z.x.push_back(detail::parse_cell(cells[j + 1], row, header[j + 1]));
    z.y = detail::parse_cell(cells.back(), row, "y");
    out.t.push_back(t);
    points.push_back(std::move(z));
  }
  if (points.empty()) throw ValidationError("csv: no data rows");
  out.series = TimeSeries(std::move(points));
  return out;
}

inline TimedSeries read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open '" + path + "'");
  return read_series_csv(in);
}

/// Writes `t,x1,...,xp,y`; t defaults to 1..n.
inline void write_series_csv(std::ostream& out, const TimeSeries& series,
                             const std::vector<std::int64_t>& t = {}) {
  if (!t.empty() && t.size() != series.size()) {
    throw ValidationError("write_series_csv: time stamp count differs from series length");
  }
  out << "t";
  for (std::size_t j = 1; j <= series.dim(); ++j) out << ",x" << j;
  out << ",y\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const TimePoint& z = series.points()[i];
    out << (t.empty() ? static_cast<std::int64_t>(i + 1) : t[i]);
    for (double v : z.x) out << ',' << format_double(v);
    out << ',' << format_double(z.y) << '\n';
  }
}

/// Writes each line of `text` prefixed with "# ".
inline void write_comment_block(std::ostream& out, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out << "# " << line << '\n';
}

}  // namespace qfcv
