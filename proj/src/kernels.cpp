// OpenMP kernels over the nonzeros of a SparseTensor4. The serial baselines
// live in kernels_reference.cpp.

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/parallel.hpp"
#include "qaexpert/tensor.hpp"

namespace qaexpert {

FactorMatrix khatri_rao(const FactorMatrix& a, const FactorMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation(fmt::format("khatri_rao rank mismatch: {} vs {}", a.cols(), b.cols()));
  }
  FactorMatrix out(a.rows() * b.rows(), a.cols());
  const Eigen::Index nb = b.rows();
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (Eigen::Index p = 0; p < a.rows(); ++p) {
    for (Eigen::Index q = 0; q < nb; ++q) {
      out.row(p * nb + q) = a.row(p).cwiseProduct(b.row(q));
    }
  }
  return out;
}

namespace {

SquareMatrix gram(const FactorMatrix& a) {
  const Eigen::Index rank = a.cols();
  SquareMatrix g(rank, rank);
  for (Eigen::Index r = 0; r < rank; ++r) {
    for (Eigen::Index s = r; s < rank; ++s) {
      const double v = a.col(r).dot(a.col(s));
      g(r, s) = v;
      g(s, r) = v;
    }
  }
  return g;
}

}  // namespace

SquareMatrix gram_hadamard(std::span<const FactorMatrix> factors, std::size_t skip_mode) {
  if (factors.empty()) throw ContractViolation("gram_hadamard needs at least one factor");
  if (skip_mode != kNoSkip && skip_mode >= factors.size()) {
    throw ContractViolation(fmt::format("skip mode {} out of range for {} factors", skip_mode, factors.size()));
  }
  const Eigen::Index rank = factors[0].cols();
  for (const auto& f : factors) {
    if (f.cols() != rank) throw ContractViolation("gram_hadamard factors disagree on rank");
  }
  SquareMatrix v = SquareMatrix::Ones(rank, rank);
  for (std::size_t m = 0; m < factors.size(); ++m) {
    if (m == skip_mode) continue;
    v = v.cwiseProduct(gram(factors[m]));
  }
  return v;
}

FactorMatrix mttkrp(const SparseTensor4& x, std::span<const FactorMatrix> factors, std::size_t mode) {
  const std::size_t rank = check_factors(x.dims(), factors);
  if (mode >= kOrder) throw ContractViolation(fmt::format("mode {} out of range", mode));

  const auto& rows = x.rows_of(mode);
  const auto n_rows = static_cast<std::ptrdiff_t>(x.dim(mode));
  FactorMatrix out = FactorMatrix::Zero(x.dim(mode), rank);

#pragma omp parallel num_threads(worker_count())
  {
    Eigen::RowVectorXd term(rank);
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n_rows; ++i) {
      auto dst = out.row(i);
      for (std::size_t p = rows.offsets[i]; p < rows.offsets[i + 1]; ++p) {
        term.setConstant(rows.values[p]);
        for (std::size_t m = 0; m < kOrder; ++m) {
          if (m == mode) continue;
          term = term.cwiseProduct(factors[m].row(rows.indices[m][p]));
        }
        dst += term;
      }
    }
  }
  return out;
}

double reconstruct_entry(std::span<const FactorMatrix> factors, const Vector& norms, const Index4& index) {
  if (factors.size() != kOrder) throw ContractViolation("reconstruct_entry needs four factors");
  const Eigen::Index rank = norms.size();
  for (std::size_t m = 0; m < kOrder; ++m) {
    if (factors[m].cols() != rank) throw ContractViolation("norms length does not match factor rank");
    if (index[m] >= static_cast<std::size_t>(factors[m].rows())) {
      throw ContractViolation(fmt::format("index {} out of range in mode {}", index[m], m));
    }
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rank; ++r) {
    double term = norms[r];
    for (std::size_t m = 0; m < kOrder; ++m) term *= factors[m](index[m], r);
    sum += term;
  }
  return sum;
}

double model_norm_squared(std::span<const FactorMatrix> factors, const Vector& norms) {
  const SquareMatrix v = gram_hadamard(factors, kNoSkip);
  if (v.rows() != norms.size()) throw ContractViolation("norms length does not match factor rank");
  return norms.dot(v * norms);
}

double residual_norm(const SparseTensor4& x, std::span<const FactorMatrix> factors, const Vector& norms) {
  const std::size_t rank = check_factors(x.dims(), factors);
  if (static_cast<std::size_t>(norms.size()) != rank) throw ContractViolation("norms length does not match rank");

  // ||X - M||^2 = sum_nz (x - m)^2 + (||M||^2 - sum_nz m^2). The second term is
  // the model's mass off the support and vanishes exactly when X is dense.
  const std::size_t nnz = x.nnz();
  std::array<double, kReductionBlocks> err{};
  std::array<double, kReductionBlocks> on_support{};
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (int b = 0; b < kReductionBlocks; ++b) {
    const std::size_t begin = nnz * b / kReductionBlocks;
    const std::size_t end = nnz * (b + 1) / kReductionBlocks;
    double e_sum = 0.0;
    double m_sum = 0.0;
    for (std::size_t e = begin; e < end; ++e) {
      double m = 0.0;
      for (std::size_t r = 0; r < rank; ++r) {
        double term = norms[r];
        for (std::size_t mode = 0; mode < kOrder; ++mode) term *= factors[mode](x.index(mode, e), r);
        m += term;
      }
      const double d = x.value(e) - m;
      e_sum += d * d;
      m_sum += m * m;
    }
    err[b] = e_sum;
    on_support[b] = m_sum;
  }
  double sq = 0.0;
  double support_mass = 0.0;
  for (int b = 0; b < kReductionBlocks; ++b) {
    sq += err[b];
    support_mass += on_support[b];
  }
  if (nnz < x.cell_count()) sq += std::max(0.0, model_norm_squared(factors, norms) - support_mass);
  return std::sqrt(sq);
}

}  // namespace qaexpert
