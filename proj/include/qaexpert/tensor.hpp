#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qaexpert {

inline constexpr std::size_t kOrder = 4;

using Dims4 = std::array<std::size_t, kOrder>;
using Index4 = std::array<std::size_t, kOrder>;

/// Dense rows x rank factor, row-major so one row is one entity's loading.
using FactorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SquareMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TensorEntry {
  Index4 index;
  double value;
};

/**
 * Order-4 sparse tensor in coordinate format.
 *
 * Entries are sorted lexicographically by (i, j, k, l). Duplicate coordinates
 * passed to the constructor are summed and cells that sum to zero are dropped.
 * For every mode the constructor also builds a row grouping (a CSR-style
 * permutation of the nonzeros) so mode-wise kernels can own output rows.
 */
class SparseTensor4 {
 public:
  struct ModeRows {
    std::vector<std::size_t> offsets;  // dims[mode] + 1 entries
    std::vector<std::size_t> order;    // nonzero ids grouped by row, stable
    // Copies of the nonzeros laid out in `order`, for sequential access.
    std::array<std::vector<std::size_t>, kOrder> indices;
    std::vector<double> values;
  };

  SparseTensor4();
  SparseTensor4(const Dims4& dims, std::vector<TensorEntry> entries);

  const Dims4& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::size_t index(std::size_t mode, std::size_t e) const { return indices_[mode][e]; }
  Index4 coordinate(std::size_t e) const;
  double value(std::size_t e) const { return values_[e]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const std::size_t> mode_indices(std::size_t mode) const { return indices_.at(mode); }

  const ModeRows& rows_of(std::size_t mode) const { return mode_rows_.at(mode); }

  /// Product of the four dimensions, saturating at SIZE_MAX.
  std::size_t cell_count() const noexcept;
  double frobenius_norm() const;
  std::vector<TensorEntry> entries() const;

 private:
  void build_mode_rows();

  Dims4 dims_{1, 1, 1, 1};
  std::array<std::vector<std::size_t>, kOrder> indices_;
  std::vector<double> values_;
  std::array<ModeRows, kOrder> mode_rows_;
};

/// Column-wise Kronecker product: row p * b.rows() + q of column r is a(p,r) * b(q,r).
FactorMatrix khatri_rao(const FactorMatrix& a, const FactorMatrix& b);

inline constexpr std::size_t kNoSkip = static_cast<std::size_t>(-1);

/// Hadamard product of the Gram matrices A^T A of every factor except skip_mode.
/// Pass kNoSkip to include all factors.
SquareMatrix gram_hadamard(std::span<const FactorMatrix> factors, std::size_t skip_mode);

/**
 * Matricized tensor times Khatri-Rao product for one mode.
 *
 * Row i of the result is the sum over nonzeros x with index i in `mode` of
 * x times the elementwise product of the other modes' factor rows. This is
 * X_(n) (A_N ⊙ ... ⊙ A_{n+1} ⊙ A_{n-1} ⊙ ... ⊙ A_1) with the first remaining
 * mode varying fastest in the unfolding's column index.
 *
 * Rows are distributed over OpenMP threads and each row accumulates its
 * nonzeros in coordinate order, so the result is bitwise identical to
 * reference::mttkrp for every thread count.
 */
FactorMatrix mttkrp(const SparseTensor4& x, std::span<const FactorMatrix> factors, std::size_t mode);

/// sum_r norms[r] * prod_m factors[m](index[m], r)
double reconstruct_entry(std::span<const FactorMatrix> factors, const Vector& norms, const Index4& index);

/// Frobenius norm of X minus the Kruskal model over the full index space.
/// Evaluated from the nonzeros and the factor Grams; nothing is densified.
double residual_norm(const SparseTensor4& x, std::span<const FactorMatrix> factors, const Vector& norms);

/// Squared Frobenius norm of the Kruskal model: norms^T (*_m A_m^T A_m) norms.
double model_norm_squared(std::span<const FactorMatrix> factors, const Vector& norms);

// Serial kernels kept as the baseline for tests and benchmarks.
namespace reference {

FactorMatrix mttkrp(const SparseTensor4& x, std::span<const FactorMatrix> factors, std::size_t mode);
double residual_norm(const SparseTensor4& x, std::span<const FactorMatrix> factors, const Vector& norms);

}  // namespace reference

/// Checks that factors match the tensor shape and share one rank. Returns the rank.
std::size_t check_factors(const Dims4& dims, std::span<const FactorMatrix> factors);

// Text interchange: "dims I J K L" then one "i j k l value" line per nonzero.
void write_tensor(std::ostream& out, const SparseTensor4& x);
SparseTensor4 read_tensor(std::istream& in, const std::string& source = "<tensor>");

}  // namespace qaexpert
