#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qaexpert/tensor.hpp"

namespace qaexpert {

struct TreePenalty;
namespace text {
class LineReader;
}

struct AlsConfig {
  std::size_t rank = 2;
  std::size_t max_iters = 200;
  double fit_tolerance = 1e-6;  // stop when the fit moves by less than this between sweeps
  double lambda_x = 0.1;        // ridge weight on all four factors
  std::uint64_t seed = 0;

  void validate() const;
};

using FactorSet = std::array<FactorMatrix, kOrder>;

/**
 * Kruskal model with unit-norm factor columns and the weights in `norms`.
 *
 * `scales` records how the weights are split across modes for the
 * regularized objective: the solver's variables are
 * U_m = factors[m] * diag(scales[m]) and prod_m scales[m][r] == norms[r].
 * A factor column is all zeros only when U_m's column was.
 */
struct CpModel {
  FactorSet factors;
  Vector norms;
  std::array<Vector, kOrder> scales;
  std::vector<double> fit_history;  // objective after each sweep
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(norms.size()); }
  Dims4 dims() const;
  /// U_m with the per-mode scales applied.
  FactorSet scaled_factors() const;
};

/// Splits solver variables U_m into unit columns, per-mode scales, and weights.
CpModel normalize_model(const FactorSet& u);

/// 0.5 ||X - [[U1..U4]]||^2 + (lambda_x / 2) sum_m ||U_m||^2 on the model's scaled factors.
double tensor_objective(const SparseTensor4& x, const CpModel& model, double lambda_x);

/// 1 - ||X - model|| / ||X||. For ||X|| = 0 this is 1 when the residual is 0
/// and -infinity otherwise.
double fit_metric(const SparseTensor4& x, const CpModel& model);

/**
 * Regularized CP-ALS.
 *
 * Each sweep updates modes 0..3 in turn. Mode n solves
 * U_n (V + lambda_x I) = MTTKRP(X, U, n) with V the Hadamard product of the
 * other modes' Grams; with a tree penalty, row l of mode 0 adds
 * lambda_w * w_l to the diagonal. Singular systems fall back to the
 * pseudo-inverse. After every mode update the column weights are
 * redistributed across modes to the split that minimizes the ridge terms,
 * which leaves the fit unchanged, so the objective never increases.
 *
 * Cost per sweep is O(nnz * R * N + sum_n I_n R^2 + R^3).
 *
 * Throws SolverDiverged if an iterate becomes non-finite.
 */
CpModel cp_als(const SparseTensor4& x, const AlsConfig& config, const TreePenalty* tree_penalty = nullptr);

/// Uniform [0, 1) factors drawn mode by mode, row-major, from one Rng stream.
FactorSet random_factors(const Dims4& dims, std::size_t rank, std::uint64_t seed);

namespace als {

/// Symmetric system solve: rhs * (v + ridge I)^+ row by row. Uses the
/// eigen-decomposition pseudo-inverse so singular systems stay finite.
class RidgeSolver {
 public:
  RidgeSolver(const SquareMatrix& v, double ridge);
  const SquareMatrix& inverse() const noexcept { return inverse_; }
  Eigen::RowVectorXd solve(const Eigen::RowVectorXd& rhs) const { return rhs * inverse_; }

 private:
  SquareMatrix inverse_;
};

SquareMatrix pseudo_inverse(const SquareMatrix& symmetric);

/// Solves every row of mode `mode` against the current other factors.
/// row_ridge, when nonempty, adds a per-row diagonal term on top of lambda_x.
FactorMatrix solve_mode(const SparseTensor4& x, const FactorSet& u, std::size_t mode, double lambda_x,
                        std::span<const double> row_ridge = {});

/// Moves weight between the modes of each column to minimize
/// sum_m alpha_m ||U_m col||^2 at fixed product of column norms, where
/// alpha_m = lambda_x plus, for mode 0, lambda_w times the row-weighted
/// column mass. Columns with a zero norm in any mode are zeroed.
void rebalance(FactorSet& u, double lambda_x, double lambda_w, std::span<const double> row_weights);

bool all_finite(const FactorSet& u);

}  // namespace als

// Text format:
//   cp-model rank R dims I J K L
//   factor <mode> <rows>       followed by one line of R values per row
//   norms <R values>
//   scales <mode> <R values>   one line per mode
//   history <n> <values>
//   status <iterations> <converged 0|1>
// Values use 17 significant digits so a save/load round trip is exact.
void write_cp_model(std::ostream& out, const CpModel& model);
CpModel read_cp_model(std::istream& in, const std::string& source = "<cp-model>");
/// Reads one cp-model block, stopping after its status line.
CpModel read_cp_model(text::LineReader& reader);

}  // namespace qaexpert
