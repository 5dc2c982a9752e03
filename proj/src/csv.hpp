#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ddat::csv {

struct Table {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  std::size_t column(std::string_view name) const;  // throws DataError if absent
  bool has_column(std::string_view name) const;
  double number(std::size_t row, std::size_t col) const;
};

/// Comma-separated, header required. Blank lines and lines starting with
/// '#' are skipped. Every row must have the header's width.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line);
double parse_number(std::string_view cell, const std::filesystem::path& source, std::size_t line,
                    std::size_t col);

/// Shortest representation that round-trips exactly.
std::string format(double v);

}  // namespace ddat::csv
