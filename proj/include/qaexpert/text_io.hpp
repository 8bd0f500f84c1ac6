#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace qaexpert::text {

/// 17 significant digits, enough for an exact double round trip.
std::string format_double(double v);

/// Splits on ASCII whitespace.
std::vector<std::string_view> split_ws(std::string_view line);
std::vector<std::string_view> split(std::string_view line, char sep);

/// Line reader that tracks 1-based line numbers and skips blank lines.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next non-blank line with trailing CR stripped; false at end of input.
  bool next(std::string& line);

  std::int64_t line_number() const noexcept { return line_; }
  const std::string& source() const noexcept { return source_; }

  [[noreturn]] void fail(const std::string& what) const;

  double to_double(std::string_view token) const;
  std::int64_t to_int(std::string_view token) const;
  std::size_t to_size(std::string_view token) const;

 private:
  std::istream& in_;
  std::string source_;
  std::int64_t line_ = 0;
};

}  // namespace qaexpert::text
