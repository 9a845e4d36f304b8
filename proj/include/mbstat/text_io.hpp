#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mbstat {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Splits one CSV line on commas. Fields are not quoted in any format this
/// library reads or writes.
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

/// Iterates lines of a text buffer, stripping a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  /// Returns false at end of input. Row numbers are 1-based.
  bool next(std::string_view& line);
  std::size_t row() const { return row_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t row_ = 0;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

}  // namespace mbstat
