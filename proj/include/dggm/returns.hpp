#pragma once

// Return panels: CSV ingestion, standardization and weekly log returns.

#include <Eigen/Dense>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dggm/error.hpp"

namespace dggm {

struct ReturnsPanel {
  Eigen::MatrixXd Y;                // T x p
  std::vector<std::string> labels;  // p column names
  std::vector<std::string> dates;   // T stamps, may be empty
  bool standardized = false;

  int T() const noexcept { return static_cast<int>(Y.rows()); }
  int p() const noexcept { return static_cast<int>(Y.cols()); }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, int line, int column) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw DataError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": not a number: '" +
                    s + "'");
  return v;
}

}  // namespace detail

/// Subtract column means and divide by sample standard deviations.
inline void standardize(ReturnsPanel& panel) {
  const int T = panel.T();
  if (T < 2) throw DataError("standardization needs at least two rows");
  for (int j = 0; j < panel.p(); ++j) {
    auto col = panel.Y.col(j);
    col.array() -= col.mean();
    const double sd = std::sqrt(col.squaredNorm() / (T - 1));
    if (!(sd > 0.0)) throw DataError("column '" + panel.labels[j] + "' is constant");
    col /= sd;
  }
  panel.standardized = true;
}

inline ReturnsPanel parse_returns_csv(std::istream& in, bool standardize_columns) {
  ReturnsPanel panel;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw DataError("line " + std::to_string(lineno) + ": header needs a date column and labels");
  panel.labels.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    if (!seen.insert(cells[0]).second) throw DataError("line " + std::to_string(lineno) + ": duplicate date " + cells[0]);
    panel.dates.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j)
      row.push_back(detail::parse_number(cells[j], lineno, static_cast<int>(j + 1)));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows");
  panel.Y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(panel.labels.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < rows[t].size(); ++j) panel.Y(t, j) = rows[t][j];
  if (standardize_columns) standardize(panel);
  return panel;
}

inline ReturnsPanel load_returns_csv(const std::string& path, bool standardize_columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_returns_csv(in, standardize_columns);
}

inline void write_returns_csv(std::ostream& out, const ReturnsPanel& panel) {
  out << "date";
  for (const auto& l : panel.labels) out << ',' << l;
  out << '\n';
  out.precision(17);
  for (int t = 0; t < panel.T(); ++t) {
    out << (panel.dates.empty() ? std::to_string(t + 1) : panel.dates[t]);
    for (int j = 0; j < panel.p(); ++j) out << ',' << panel.Y(t, j);
    out << '\n';
  }
}

/// YYYYMMDD or YYYY-MM-DD.
inline std::chrono::sys_days parse_date(const std::string& s) {
  std::string digits;
  for (char ch : s)
    if (ch != '-') digits.push_back(ch);
  if (digits.size() != 8 || digits.find_first_not_of("0123456789") != std::string::npos)
    throw DataError("bad date '" + s + "'");
  const int y = std::stoi(digits.substr(0, 4));
  const unsigned m = static_cast<unsigned>(std::stoi(digits.substr(4, 2)));
  const unsigned d = static_cast<unsigned>(std::stoi(digits.substr(6, 2)));
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("bad date '" + s + "'");
  return std::chrono::sys_days{ymd};
}

inline std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Weekly log returns from daily simple returns (fractions). Weeks start on
/// Monday and are stamped with that Monday. With drop_partial, the first week
/// is dropped unless data starts on its Monday and the last one unless data
/// reaches its Friday.
inline ReturnsPanel weekly_log_returns(const ReturnsPanel& daily, bool drop_partial = true) {
  using namespace std::chrono;
  if (daily.dates.size() != static_cast<std::size_t>(daily.T())) throw DataError("daily panel needs dates");
  ReturnsPanel out;
  out.labels = daily.labels;
  std::vector<sys_days> week_of;
  std::vector<Eigen::VectorXd> sums;
  sys_days prev{};
  for (int t = 0; t < daily.T(); ++t) {
    const sys_days day = parse_date(daily.dates[t]);
    if (t > 0 && day <= prev) throw DataError("dates must increase: " + daily.dates[t]);
    prev = day;
    const sys_days monday = day - (weekday{day} - Monday);
    if (week_of.empty() || week_of.back() != monday) {
      week_of.push_back(monday);
      sums.push_back(Eigen::VectorXd::Zero(daily.p()));
    }
    for (int j = 0; j < daily.p(); ++j) {
      const double r = daily.Y(t, j);
      if (!(r > -1.0)) throw DataError("simple return <= -1 on " + daily.dates[t]);
      sums.back()(j) += std::log1p(r);
    }
  }
  std::size_t lo = 0, hi = week_of.size();
  if (drop_partial && hi > 0) {
    if (parse_date(daily.dates.front()) != week_of.front()) ++lo;
    if (hi > lo && weekday{parse_date(daily.dates.back())}.iso_encoding() < 5) --hi;
  }
  out.Y.resize(static_cast<Eigen::Index>(hi > lo ? hi - lo : 0), daily.p());
  for (std::size_t w = lo; w < hi; ++w) {
    out.Y.row(static_cast<Eigen::Index>(w - lo)) = sums[w].transpose();
    out.dates.push_back(format_date(week_of[w]));
  }
  return out;
}

}  // namespace dggm
