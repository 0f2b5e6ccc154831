#include "fundascreen/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "fundascreen/error.hpp"

namespace fundascreen::csv {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

Table Table::parse(std::istream& in, const std::string& source) {
  Table t;
  t.source_ = source;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (!have_header) {
      t.header_ = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header_.size()) {
      fail(ErrorCode::parse, source + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(t.header_.size()) + " fields, found " +
                                 std::to_string(fields.size()));
    }
    t.rows_.push_back(Row{line_no, std::move(fields)});
  }
  if (!have_header) fail(ErrorCode::parse, source + ": empty file, no header");
  return t;
}

Table Table::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return parse(in, path);
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::column(std::string_view name) const {
  if (auto c = find_column(name)) return *c;
  fail(ErrorCode::parse, source_ + ": missing column '" + std::string(name) + "'");
}

void Table::require_header(const std::vector<std::string>& expected) const {
  if (header_ != expected) {
    fail(ErrorCode::parse, source_ + ":1: unexpected header '" + join(header_) + "', expected '" +
                               join(expected) + "'");
  }
}

namespace {

std::optional<double> parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

}  // namespace

double Table::number(const Row& row, std::size_t col) const {
  auto v = parse_double(row.fields.at(col));
  if (!v) {
    fail(ErrorCode::parse, source_ + ":" + std::to_string(row.line) + ": column '" + header_[col] +
                               "' is not a number: '" + row.fields[col] + "'");
  }
  return *v;
}

std::optional<double> Table::optional_number(const Row& row, std::size_t col) const {
  if (row.fields.at(col).empty()) return std::nullopt;
  return number(row, col);
}

long long Table::integer(const Row& row, std::size_t col) const {
  const auto& text = row.fields.at(col);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::parse, source_ + ":" + std::to_string(row.line) + ": column '" + header_[col] +
                               "' is not an integer: '" + text + "'");
  }
  return v;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::string>& fields, char sep) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(sep);
    out += fields[i];
  }
  return out;
}

}  // namespace fundascreen::csv
