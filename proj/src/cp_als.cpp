#include "qaexpert/cp_als.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/factor_io.hpp"
#include "qaexpert/rng.hpp"
#include "qaexpert/text_io.hpp"
#include "qaexpert/tree_lasso.hpp"

namespace qaexpert {

void AlsConfig::validate() const {
  if (rank < 1) throw ContractViolation("rank must be at least 1");
  if (max_iters < 1) throw ContractViolation("max_iters must be at least 1");
  if (!(fit_tolerance >= 0.0)) throw ContractViolation("fit_tolerance must be >= 0");
  if (!(lambda_x >= 0.0) || !std::isfinite(lambda_x)) throw ContractViolation("lambda_x must be finite and >= 0");
}

Dims4 CpModel::dims() const {
  Dims4 d{};
  for (std::size_t m = 0; m < kOrder; ++m) d[m] = static_cast<std::size_t>(factors[m].rows());
  return d;
}

FactorSet CpModel::scaled_factors() const {
  FactorSet u;
  for (std::size_t m = 0; m < kOrder; ++m) u[m] = factors[m] * scales[m].asDiagonal();
  return u;
}

CpModel normalize_model(const FactorSet& u) {
  const auto rank = u[0].cols();
  CpModel model;
  model.norms = Vector::Ones(rank);
  for (std::size_t m = 0; m < kOrder; ++m) {
    model.factors[m] = u[m];
    model.scales[m] = u[m].colwise().norm().transpose();
  }
  for (Eigen::Index r = 0; r < rank; ++r) {
    double weight = 1.0;
    for (std::size_t m = 0; m < kOrder; ++m) weight *= model.scales[m][r];
    model.norms[r] = weight;
    for (std::size_t m = 0; m < kOrder; ++m) {
      const double c = model.scales[m][r];
      if (c > 0.0) model.factors[m].col(r) /= c;
    }
  }
  return model;
}

namespace {

double ridge_sum(const FactorSet& u) {
  double s = 0.0;
  for (const auto& f : u) s += f.squaredNorm();
  return s;
}

double fit_from_residual(double residual, double x_norm) {
  if (x_norm == 0.0) return residual == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return std::min(1.0, 1.0 - residual / x_norm);
}

}  // namespace

double tensor_objective(const SparseTensor4& x, const CpModel& model, double lambda_x) {
  const FactorSet u = model.scaled_factors();
  const double r = residual_norm(x, u, Vector::Ones(model.rank()));
  return 0.5 * r * r + 0.5 * lambda_x * ridge_sum(u);
}

double fit_metric(const SparseTensor4& x, const CpModel& model) {
  return fit_from_residual(residual_norm(x, model.factors, model.norms), x.frobenius_norm());
}

FactorSet random_factors(const Dims4& dims, std::size_t rank, std::uint64_t seed) {
  Rng rng(seed);
  FactorSet u;
  for (std::size_t m = 0; m < kOrder; ++m) {
    u[m].resize(dims[m], rank);
    for (std::size_t i = 0; i < dims[m]; ++i)
      for (std::size_t r = 0; r < rank; ++r) u[m](i, r) = rng.uniform();
  }
  return u;
}

namespace als {

SquareMatrix pseudo_inverse(const SquareMatrix& symmetric) {
  const Eigen::Index n = symmetric.rows();
  Eigen::SelfAdjointEigenSolver<SquareMatrix> eig(symmetric);
  const Vector& ev = eig.eigenvalues();
  const double top = n ? ev.cwiseAbs().maxCoeff() : 0.0;
  const double cutoff = top * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  Vector inv_ev(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_ev[i] = (top > 0.0 && ev[i] > cutoff) ? 1.0 / ev[i] : 0.0;
  const auto& q = eig.eigenvectors();
  return q * inv_ev.asDiagonal() * q.transpose();
}

RidgeSolver::RidgeSolver(const SquareMatrix& v, double ridge) {
  SquareMatrix a = v;
  a.diagonal().array() += ridge;
  Eigen::LLT<SquareMatrix> llt(a);
  const double min_pivot = llt.info() == Eigen::Success ? llt.matrixLLT().diagonal().minCoeff() : 0.0;
  const double max_pivot = llt.info() == Eigen::Success ? llt.matrixLLT().diagonal().maxCoeff() : 0.0;
  // The Cholesky factor is used only when clearly nonsingular; otherwise the
  // minimum-norm solution keeps the update finite.
  if (llt.info() == Eigen::Success && min_pivot > 1e-7 * max_pivot) {
    inverse_ = llt.solve(SquareMatrix::Identity(a.rows(), a.cols()));
    inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  } else {
    inverse_ = pseudo_inverse(a);
  }
}

FactorMatrix solve_mode(const SparseTensor4& x, const FactorSet& u, std::size_t mode, double lambda_x,
                        std::span<const double> row_ridge) {
  const FactorMatrix rhs = mttkrp(x, u, mode);
  const SquareMatrix v = gram_hadamard(u, mode);
  if (row_ridge.empty()) {
    const RidgeSolver solver(v, lambda_x);
    return rhs * solver.inverse();
  }
  if (row_ridge.size() != x.dim(mode)) throw ContractViolation("row ridge length does not match mode size");
  std::map<double, RidgeSolver> solvers;
  FactorMatrix out(rhs.rows(), rhs.cols());
  for (Eigen::Index i = 0; i < rhs.rows(); ++i) {
    const double d = row_ridge[i];
    auto it = solvers.find(d);
    if (it == solvers.end()) it = solvers.emplace(d, RidgeSolver(v, lambda_x + d)).first;
    out.row(i) = rhs.row(i) * it->second.inverse();
  }
  return out;
}

void rebalance(FactorSet& u, double lambda_x, double lambda_w, std::span<const double> row_weights) {
  const Eigen::Index rank = u[0].cols();
  for (Eigen::Index r = 0; r < rank; ++r) {
    std::array<double, kOrder> c{};
    double product = 1.0;
    for (std::size_t m = 0; m < kOrder; ++m) {
      c[m] = u[m].col(r).norm();
      product *= c[m];
    }
    if (product == 0.0) {
      for (auto& f : u) f.col(r).setZero();
      continue;
    }
    std::array<double, kOrder> alpha;
    alpha.fill(lambda_x);
    if (lambda_w > 0.0 && !row_weights.empty()) {
      double mass = 0.0;
      for (Eigen::Index l = 0; l < u[0].rows(); ++l) mass += row_weights[l] * u[0](l, r) * u[0](l, r);
      alpha[0] += lambda_w * mass / (c[0] * c[0]);
    }
    const bool all_positive = std::all_of(alpha.begin(), alpha.end(), [](double a) { return a > 0.0; });
    const bool all_zero = std::all_of(alpha.begin(), alpha.end(), [](double a) { return a == 0.0; });
    std::array<double, kOrder> target{};
    if (all_positive) {
      // alpha_m c_m^2 = mu for every mode, with prod c_m = product.
      double alpha_product = 1.0;
      for (double a : alpha) alpha_product *= a;
      const double mu = std::sqrt(product) * std::pow(alpha_product, 0.25);
      for (std::size_t m = 0; m < kOrder; ++m) target[m] = std::sqrt(mu / alpha[m]);
    } else if (all_zero) {
      target.fill(std::pow(product, 0.25));
    } else {
      continue;
    }
    for (std::size_t m = 0; m < kOrder; ++m) u[m].col(r) *= target[m] / c[m];
  }
}

bool all_finite(const FactorSet& u) {
  return std::all_of(u.begin(), u.end(), [](const FactorMatrix& f) { return f.allFinite(); });
}

}  // namespace als

CpModel cp_als(const SparseTensor4& x, const AlsConfig& config, const TreePenalty* tree_penalty) {
  config.validate();
  const Dims4& dims = x.dims();
  std::vector<std::string> warnings;
  if (config.rank > *std::min_element(dims.begin(), dims.end())) {
    warnings.push_back(fmt::format("rank {} exceeds the smallest tensor dimension {}", config.rank,
                                   *std::min_element(dims.begin(), dims.end())));
  }

  std::vector<double> row_ridge;
  std::span<const double> row_weights;
  double lambda_w = 0.0;
  if (tree_penalty) {
    if (tree_penalty->tree.row_count() != dims[0]) {
      throw ContractViolation(fmt::format("tree covers {} rows but mode 0 has {}", tree_penalty->tree.row_count(),
                                          dims[0]));
    }
    lambda_w = tree_penalty->lambda_w;
    row_weights = tree_penalty->row_weights;
    row_ridge.reserve(row_weights.size());
    for (double w : row_weights) row_ridge.push_back(lambda_w * w);
  }

  FactorSet u = random_factors(dims, config.rank, config.seed);
  const double x_norm = x.frobenius_norm();
  const Vector unit = Vector::Ones(config.rank);

  std::vector<double> history;
  double previous_fit = -std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t it = 0;
  while (it < config.max_iters) {
    ++it;
    for (std::size_t mode = 0; mode < kOrder; ++mode) {
      u[mode] = als::solve_mode(x, u, mode, config.lambda_x, mode == 0 ? std::span<const double>(row_ridge)
                                                                     : std::span<const double>());
      if (!u[mode].allFinite()) {
        throw SolverDiverged(fmt::format("non-finite factor in mode {} at sweep {}", mode, it));
      }
      als::rebalance(u, config.lambda_x, lambda_w, row_weights);
    }
    const double residual = residual_norm(x, u, unit);
    double objective = 0.5 * residual * residual + 0.5 * config.lambda_x * ridge_sum(u);
    if (tree_penalty) objective += weight_penalty(u[0], *tree_penalty);
    if (!std::isfinite(objective)) throw SolverDiverged(fmt::format("non-finite objective at sweep {}", it));
    history.push_back(objective);

    const double fit = fit_from_residual(residual, x_norm);
    if (it > 1 && !(std::abs(fit - previous_fit) >= config.fit_tolerance)) {
      converged = true;
      break;
    }
    previous_fit = fit;
  }

  CpModel model = normalize_model(u);
  model.fit_history = std::move(history);
  model.iterations = it;
  model.converged = converged;
  model.warnings = std::move(warnings);
  return model;
}

void write_cp_model(std::ostream& out, const CpModel& model) {
  const auto d = model.dims();
  out << "cp-model rank " << model.rank() << " dims " << d[0] << ' ' << d[1] << ' ' << d[2] << ' ' << d[3] << '\n';
  for (std::size_t m = 0; m < kOrder; ++m) {
    out << "factor " << m << ' ' << d[m] << '\n';
    write_factor_rows(out, model.factors[m]);
  }
  out << "norms";
  write_vector(out, model.norms);
  out << '\n';
  for (std::size_t m = 0; m < kOrder; ++m) {
    out << "scales " << m;
    write_vector(out, model.scales[m]);
    out << '\n';
  }
  out << "history " << model.fit_history.size();
  for (double v : model.fit_history) out << ' ' << text::format_double(v);
  out << '\n';
  out << "status " << model.iterations << ' ' << (model.converged ? 1 : 0) << '\n';
}

CpModel read_cp_model(text::LineReader& reader) {
  std::string line;
  if (!reader.next(line)) reader.fail("missing cp-model header");
  auto tok = text::split_ws(line);
  if (tok.size() != 8 || tok[0] != "cp-model" || tok[1] != "rank" || tok[3] != "dims") {
    reader.fail("expected 'cp-model rank R dims I J K L'");
  }
  const std::size_t rank = reader.to_size(tok[2]);
  if (rank == 0) reader.fail("rank must be positive");
  Dims4 dims{};
  for (std::size_t m = 0; m < kOrder; ++m) dims[m] = reader.to_size(tok[4 + m]);

  CpModel model;
  for (std::size_t m = 0; m < kOrder; ++m) {
    if (!reader.next(line)) reader.fail("missing factor block");
    tok = text::split_ws(line);
    if (tok.size() != 3 || tok[0] != "factor" || reader.to_size(tok[1]) != m || reader.to_size(tok[2]) != dims[m]) {
      reader.fail(fmt::format("expected 'factor {} {}'", m, dims[m]));
    }
    model.factors[m] = read_factor_rows(reader, dims[m], rank);
  }
  if (!reader.next(line)) reader.fail("missing norms line");
  tok = text::split_ws(line);
  if (tok.empty() || tok[0] != "norms") reader.fail("expected 'norms'");
  model.norms = parse_vector(reader, tok, 1, rank);
  for (std::size_t m = 0; m < kOrder; ++m) {
    if (!reader.next(line)) reader.fail("missing scales line");
    tok = text::split_ws(line);
    if (tok.size() < 2 || tok[0] != "scales" || reader.to_size(tok[1]) != m) {
      reader.fail(fmt::format("expected 'scales {}'", m));
    }
    model.scales[m] = parse_vector(reader, tok, 2, rank);
  }
  if (!reader.next(line)) reader.fail("missing history line");
  tok = text::split_ws(line);
  if (tok.size() < 2 || tok[0] != "history") reader.fail("expected 'history n ...'");
  const std::size_t n = reader.to_size(tok[1]);
  const Vector hist = parse_vector(reader, tok, 2, n);
  model.fit_history.assign(hist.data(), hist.data() + hist.size());
  if (!reader.next(line)) reader.fail("missing status line");
  tok = text::split_ws(line);
  if (tok.size() != 3 || tok[0] != "status") reader.fail("expected 'status iterations converged'");
  model.iterations = reader.to_size(tok[1]);
  model.converged = reader.to_size(tok[2]) != 0;
  return model;
}

CpModel read_cp_model(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  return read_cp_model(reader);
}

}  // namespace qaexpert
