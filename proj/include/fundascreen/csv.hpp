#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fundascreen::csv {

// Minimal comma-separated reader for the project's own files. Fields never
// contain commas or quotes, so no quoting is supported.
struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

class Table {
 public:
  // Parses `in`; the first non-empty line is the header. `source` names the
  // file in error messages.
  static Table parse(std::istream& in, const std::string& source);
  static Table read_file(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source() const { return source_; }

  // Column index by name; fails with a parse error naming the file.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;

  // Throws unless the header equals `expected` exactly.
  void require_header(const std::vector<std::string>& expected) const;

  double number(const Row& row, std::size_t col) const;
  std::optional<double> optional_number(const Row& row, std::size_t col) const;
  long long integer(const Row& row, std::size_t col) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

std::vector<std::string> split_line(std::string_view line);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace fundascreen::csv
