#pragma once

#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace quota::csv {

/// %.17g; round-trips every finite double.
std::string format_double(double v);

/// Quotes the field if it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

/// Row builder. Fields are escaped on write.
class Row {
 public:
  Row& add(std::string_view s);
  Row& add(const char* s) { return add(std::string_view(s)); }
  Row& add(double v);
  Row& add(std::int64_t v);
  Row& add(std::uint64_t v);
  Row& add(int v) { return add(static_cast<std::int64_t>(v)); }
  Row& empty() { return add(std::string_view()); }

  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

void write_row(std::ostream& os, const std::vector<std::string>& fields);
inline void write_row(std::ostream& os, const Row& row) { write_row(os, row.fields()); }
void write_header(std::ostream& os, std::initializer_list<std::string_view> names);

/// Splits one line back into fields, undoing escape().
std::vector<std::string> parse_line(std::string_view line);

}  // namespace quota::csv
