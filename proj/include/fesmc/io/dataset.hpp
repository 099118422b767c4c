#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fesmc/errors.hpp"

namespace fesmc::io {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  std::vector<std::string> columns;  // empty names when the file has no header
  RowMatrix values;
  // '#' comment lines from the top of the file (synthetic-data provenance).
  std::vector<std::string> comments;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i)
      out[i] = values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Numeric CSV with an optional header row. `columns` selects by header name
// or by zero-based index; empty selects every column.
inline Dataset load_dataset(const std::string& path, const std::vector<std::string>& columns = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("io", "cannot open dataset '" + path + "'");

  std::vector<std::string> lines;
  std::vector<std::size_t> line_numbers;
  std::vector<std::string> comments;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (lines.empty()) comments.emplace_back(detail::trim(t.substr(1)));
      continue;
    }
    lines.emplace_back(t);
    line_numbers.push_back(lineno);
  }
  if (lines.empty()) throw ParseError("io", "dataset '" + path + "' has no rows");

  const auto first = detail::split(lines.front());
  bool has_header = false;
  for (auto cell : first)
    if (!detail::parse_double(cell)) has_header = true;

  Dataset ds;
  ds.comments = std::move(comments);
  const std::size_t width = first.size();
  std::vector<std::string> names(width);
  if (has_header)
    for (std::size_t j = 0; j < width; ++j) names[j] = std::string(first[j]);

  std::vector<std::size_t> selected;
  if (columns.empty()) {
    for (std::size_t j = 0; j < width; ++j) selected.push_back(j);
  } else {
    for (const auto& c : columns) {
      std::optional<std::size_t> found;
      for (std::size_t j = 0; j < width; ++j)
        if (has_header && names[j] == c) found = j;
      if (!found) {
        std::size_t idx = 0;
        const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), idx);
        if (ec == std::errc() && ptr == c.data() + c.size() && idx < width) found = idx;
      }
      if (!found) throw ParseError("io", "column '" + c + "' not found in '" + path + "'");
      selected.push_back(*found);
    }
  }
  for (auto j : selected) ds.columns.push_back(names[j]);

  const std::size_t first_data = has_header ? 1 : 0;
  const std::size_t n_rows = lines.size() - first_data;
  if (n_rows == 0) throw ParseError("io", "dataset '" + path + "' has a header but no data");
  ds.values.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto cells = detail::split(lines[first_data + r]);
    const std::size_t row_no = r + 1;
    const std::string where = "row " + std::to_string(row_no) + " (line " +
                              std::to_string(line_numbers[first_data + r]) + ")";
    if (cells.size() != width)
      throw ParseError("io", where + ": expected " + std::to_string(width) + " cells, found " +
                                 std::to_string(cells.size()));
    for (std::size_t s = 0; s < selected.size(); ++s) {
      const auto cell = cells[selected[s]];
      const auto v = detail::parse_double(cell);
      if (!v)
        throw ParseError("io", where + ", column " + std::to_string(selected[s] + 1) +
                                   ": non-numeric cell '" + std::string(cell) + "'");
      ds.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = *v;
    }
  }
  return ds;
}

}  // namespace fesmc::io
