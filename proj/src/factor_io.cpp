#include "qaexpert/factor_io.hpp"

#include <ostream>
#include <string>

#include <fmt/format.h>

namespace qaexpert {

void write_factor_rows(std::ostream& out, const FactorMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index r = 0; r < m.cols(); ++r) {
      if (r) out << ' ';
      out << text::format_double(m(i, r));
    }
    out << '\n';
  }
}

FactorMatrix read_factor_rows(text::LineReader& reader, std::size_t rows, std::size_t cols) {
  FactorMatrix m(rows, cols);
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!reader.next(line)) reader.fail(fmt::format("expected {} rows, found {}", rows, i));
    const auto tok = text::split_ws(line);
    if (tok.size() != cols) reader.fail(fmt::format("expected {} values per row, got {}", cols, tok.size()));
    for (std::size_t r = 0; r < cols; ++r) m(i, r) = reader.to_double(tok[r]);
  }
  return m;
}

void write_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index r = 0; r < v.size(); ++r) out << ' ' << text::format_double(v[r]);
}

Vector parse_vector(const text::LineReader& reader, const std::vector<std::string_view>& tokens, std::size_t first,
                    std::size_t count) {
  if (tokens.size() != first + count) {
    reader.fail(fmt::format("expected {} values, got {}", count, tokens.size() < first ? 0 : tokens.size() - first));
  }
  Vector v(count);
  for (std::size_t r = 0; r < count; ++r) v[r] = reader.to_double(tokens[first + r]);
  return v;
}

}  // namespace qaexpert
