#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/tensor.hpp"

namespace qaexpert::reference {

FactorMatrix mttkrp(const SparseTensor4& x, std::span<const FactorMatrix> factors, std::size_t mode) {
  const std::size_t rank = check_factors(x.dims(), factors);
  if (mode >= kOrder) throw ContractViolation(fmt::format("mode {} out of range", mode));

  FactorMatrix out = FactorMatrix::Zero(x.dim(mode), rank);
  Eigen::RowVectorXd term(rank);
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    term.setConstant(x.value(e));
    for (std::size_t m = 0; m < kOrder; ++m) {
      if (m == mode) continue;
      term = term.cwiseProduct(factors[m].row(x.index(m, e)));
    }
    out.row(x.index(mode, e)) += term;
  }
  return out;
}

double residual_norm(const SparseTensor4& x, std::span<const FactorMatrix> factors, const Vector& norms) {
  const std::size_t rank = check_factors(x.dims(), factors);
  if (static_cast<std::size_t>(norms.size()) != rank) throw ContractViolation("norms length does not match rank");

  double sq = 0.0;
  double support_mass = 0.0;
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    const double m = reconstruct_entry(factors, norms, x.coordinate(e));
    const double d = x.value(e) - m;
    sq += d * d;
    support_mass += m * m;
  }
  if (x.nnz() < x.cell_count()) sq += std::max(0.0, model_norm_squared(factors, norms) - support_mass);
  return std::sqrt(sq);
}

}  // namespace qaexpert::reference
