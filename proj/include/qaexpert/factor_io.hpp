#pragma once

#include <iosfwd>

#include "qaexpert/tensor.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert {

/// One line per row, values separated by single spaces.
void write_factor_rows(std::ostream& out, const FactorMatrix& m);
FactorMatrix read_factor_rows(text::LineReader& reader, std::size_t rows, std::size_t cols);

void write_vector(std::ostream& out, const Vector& v);
/// Parses `count` numbers starting at token `first`.
Vector parse_vector(const text::LineReader& reader, const std::vector<std::string_view>& tokens, std::size_t first,
                    std::size_t count);

}  // namespace qaexpert
