#include "qaexpert/text_io.hpp"

#include <charconv>
#include <istream>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"

namespace qaexpert::text {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto end = line.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

bool LineReader::next(std::string& line) {
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}

void LineReader::fail(const std::string& what) const { throw ParseError(source_, line_, what); }

double LineReader::to_double(std::string_view token) const {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail("expected a number, got '" + std::string(token) + "'");
  }
  return v;
}

std::int64_t LineReader::to_int(std::string_view token) const {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail("expected an integer, got '" + std::string(token) + "'");
  }
  return v;
}

std::size_t LineReader::to_size(std::string_view token) const {
  const auto v = to_int(token);
  if (v < 0) fail("expected a non-negative integer, got '" + std::string(token) + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace qaexpert::text
