#include "quota/csv.hpp"

#include <cstdio>

namespace quota::csv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

Row& Row::add(std::string_view s) {
  fields_.emplace_back(s);
  return *this;
}

Row& Row::add(double v) {
  fields_.push_back(format_double(v));
  return *this;
}

Row& Row::add(std::int64_t v) {
  fields_.push_back(std::to_string(v));
  return *this;
}

Row& Row::add(std::uint64_t v) {
  fields_.push_back(std::to_string(v));
  return *this;
}

void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << escape(fields[i]);
  }
  os << '\n';
}

void write_header(std::ostream& os, std::initializer_list<std::string_view> names) {
  std::vector<std::string> fields(names.begin(), names.end());
  write_row(os, fields);
}

std::vector<std::string> parse_line(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace quota::csv
