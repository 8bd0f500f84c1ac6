#include "qaexpert/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert {

SparseTensor4::SparseTensor4() { build_mode_rows(); }

SparseTensor4::SparseTensor4(const Dims4& dims, std::vector<TensorEntry> entries) : dims_(dims) {
  for (std::size_t m = 0; m < kOrder; ++m) {
    if (dims_[m] == 0) throw ContractViolation(fmt::format("tensor dimension {} is zero", m));
  }
  for (const auto& e : entries) {
    for (std::size_t m = 0; m < kOrder; ++m) {
      if (e.index[m] >= dims_[m]) {
        throw ContractViolation(fmt::format("index {} in mode {} out of range (dim {})", e.index[m], m, dims_[m]));
      }
    }
    if (!std::isfinite(e.value) || e.value < 0.0) {
      throw ContractViolation(fmt::format("tensor value {} is not a finite nonnegative count", e.value));
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TensorEntry& a, const TensorEntry& b) { return a.index < b.index; });

  for (auto& v : indices_) v.reserve(entries.size());
  values_.reserve(entries.size());
  for (std::size_t p = 0; p < entries.size();) {
    const Index4 at = entries[p].index;
    double sum = 0.0;
    for (; p < entries.size() && entries[p].index == at; ++p) sum += entries[p].value;
    if (sum == 0.0) continue;
    for (std::size_t m = 0; m < kOrder; ++m) indices_[m].push_back(at[m]);
    values_.push_back(sum);
  }
  build_mode_rows();
}

void SparseTensor4::build_mode_rows() {
  const std::size_t n = values_.size();
  for (std::size_t m = 0; m < kOrder; ++m) {
    auto& rows = mode_rows_[m];
    rows.offsets.assign(dims_[m] + 1, 0);
    for (std::size_t e = 0; e < n; ++e) ++rows.offsets[indices_[m][e] + 1];
    std::partial_sum(rows.offsets.begin(), rows.offsets.end(), rows.offsets.begin());
    rows.order.assign(n, 0);
    std::vector<std::size_t> cursor(rows.offsets.begin(), rows.offsets.end() - 1);
    for (std::size_t e = 0; e < n; ++e) rows.order[cursor[indices_[m][e]]++] = e;
    rows.values.resize(n);
    for (std::size_t k = 0; k < kOrder; ++k) rows.indices[k].resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t e = rows.order[p];
      rows.values[p] = values_[e];
      for (std::size_t k = 0; k < kOrder; ++k) rows.indices[k][p] = indices_[k][e];
    }
  }
}

Index4 SparseTensor4::coordinate(std::size_t e) const {
  return {indices_[0][e], indices_[1][e], indices_[2][e], indices_[3][e]};
}

std::size_t SparseTensor4::cell_count() const noexcept {
  std::size_t cells = 1;
  for (auto d : dims_) {
    if (d != 0 && cells > std::numeric_limits<std::size_t>::max() / d) return std::numeric_limits<std::size_t>::max();
    cells *= d;
  }
  return cells;
}

double SparseTensor4::frobenius_norm() const {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

std::vector<TensorEntry> SparseTensor4::entries() const {
  std::vector<TensorEntry> out;
  out.reserve(nnz());
  for (std::size_t e = 0; e < nnz(); ++e) out.push_back({coordinate(e), values_[e]});
  return out;
}

std::size_t check_factors(const Dims4& dims, std::span<const FactorMatrix> factors) {
  if (factors.size() != kOrder) {
    throw ContractViolation(fmt::format("expected {} factor matrices, got {}", kOrder, factors.size()));
  }
  const auto rank = static_cast<std::size_t>(factors[0].cols());
  for (std::size_t m = 0; m < kOrder; ++m) {
    if (static_cast<std::size_t>(factors[m].cols()) != rank) {
      throw ContractViolation(fmt::format("factor {} has rank {}, expected {}", m, factors[m].cols(), rank));
    }
    if (static_cast<std::size_t>(factors[m].rows()) != dims[m]) {
      throw ContractViolation(
          fmt::format("factor {} has {} rows but tensor dimension is {}", m, factors[m].rows(), dims[m]));
    }
  }
  return rank;
}

void write_tensor(std::ostream& out, const SparseTensor4& x) {
  const auto& d = x.dims();
  out << "dims " << d[0] << ' ' << d[1] << ' ' << d[2] << ' ' << d[3] << '\n';
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    out << x.index(0, e) << ' ' << x.index(1, e) << ' ' << x.index(2, e) << ' ' << x.index(3, e) << ' '
        << text::format_double(x.value(e)) << '\n';
  }
}

SparseTensor4 read_tensor(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  std::string line;
  if (!reader.next(line)) reader.fail("missing 'dims' header");
  auto head = text::split_ws(line);
  if (head.size() != 5 || head[0] != "dims") reader.fail("expected 'dims I J K L'");
  Dims4 dims{};
  for (std::size_t m = 0; m < kOrder; ++m) {
    dims[m] = reader.to_size(head[m + 1]);
    if (dims[m] == 0) reader.fail("dimensions must be positive");
  }
  std::vector<TensorEntry> entries;
  while (reader.next(line)) {
    auto tok = text::split_ws(line);
    if (tok.size() != 5) reader.fail("expected 'i j k l value'");
    TensorEntry e{};
    for (std::size_t m = 0; m < kOrder; ++m) {
      e.index[m] = reader.to_size(tok[m]);
      if (e.index[m] >= dims[m]) reader.fail(fmt::format("index {} out of range in mode {}", e.index[m], m));
    }
    e.value = reader.to_double(tok[4]);
    if (!std::isfinite(e.value) || e.value < 0.0) reader.fail("value must be a finite nonnegative number");
    entries.push_back(e);
  }
  return SparseTensor4(dims, std::move(entries));
}

}  // namespace qaexpert
