#pragma once

// Minimal RFC 4180 style CSV helpers. Numbers are written in the shortest
// form that parses back to the identical double.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace poolflip::csv {

std::string format_number(double value);
std::string format_number(long long value);
inline std::string format_number(int value) { return format_number(static_cast<long long>(value)); }

/// Exact inverse of format_number; throws std::invalid_argument.
double parse_number(std::string_view text);

/// Quotes the field when it contains a comma, quote or newline.
std::string field(std::string_view text);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Splits one record (no embedded newlines). Throws std::invalid_argument on
/// an unterminated quote.
std::vector<std::string> parse_row(std::string_view line);

/// Reads all records; the first is returned as the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws std::out_of_range.
  std::size_t column(std::string_view name) const;
};
Table read_table(std::istream& is);

}  // namespace poolflip::csv
