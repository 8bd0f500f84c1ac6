#pragma once

// Brute-force dense oracles. Nothing here calls the library's kernels; the
// only shared code is the FactorMatrix container and the SparseTensor4 class
// used to hand the same data to both sides.

#include <cmath>
#include <cstddef>
#include <vector>

#include "qaexpert/rng.hpp"
#include "qaexpert/tensor.hpp"

namespace oracle {

using qaexpert::Dims4;
using qaexpert::FactorMatrix;
using qaexpert::Index4;

struct DenseTensor {
  Dims4 dims{};
  std::vector<double> cells;  // first mode fastest

  explicit DenseTensor(const Dims4& d) : dims(d), cells(d[0] * d[1] * d[2] * d[3], 0.0) {}

  std::size_t offset(const Index4& ix) const {
    return ix[0] + dims[0] * (ix[1] + dims[1] * (ix[2] + dims[2] * ix[3]));
  }
  double& at(const Index4& ix) { return cells[offset(ix)]; }
  double at(const Index4& ix) const { return cells[offset(ix)]; }

  template <class F>
  void for_each_index(F&& f) const {
    Index4 ix{};
    for (ix[3] = 0; ix[3] < dims[3]; ++ix[3])
      for (ix[2] = 0; ix[2] < dims[2]; ++ix[2])
        for (ix[1] = 0; ix[1] < dims[1]; ++ix[1])
          for (ix[0] = 0; ix[0] < dims[0]; ++ix[0]) f(ix);
  }
};

inline DenseTensor densify(const qaexpert::SparseTensor4& x) {
  DenseTensor d(x.dims());
  for (const auto& e : x.entries()) d.at(e.index) += e.value;
  return d;
}

/// Mode-n unfolding: row i_n, column sum_{k != n} i_k * prod_{m < k, m != n} I_m.
inline Eigen::MatrixXd unfold(const DenseTensor& t, std::size_t mode) {
  std::size_t cols = 1;
  for (std::size_t m = 0; m < 4; ++m)
    if (m != mode) cols *= t.dims[m];
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.dims[mode], cols);
  t.for_each_index([&](const Index4& ix) {
    std::size_t col = 0;
    std::size_t stride = 1;
    for (std::size_t m = 0; m < 4; ++m) {
      if (m == mode) continue;
      col += ix[m] * stride;
      stride *= t.dims[m];
    }
    out(ix[mode], col) = t.at(ix);
  });
  return out;
}

/// A_N ⊙ ... ⊙ A_1 without mode n, from the elementwise definition.
inline Eigen::MatrixXd khatri_rao_chain(const std::vector<FactorMatrix>& f, std::size_t mode) {
  std::size_t rows = 1;
  for (std::size_t m = 0; m < f.size(); ++m)
    if (m != mode) rows *= static_cast<std::size_t>(f[m].rows());
  const auto rank = f[0].cols();
  Eigen::MatrixXd out(rows, rank);
  for (std::size_t row = 0; row < rows; ++row) {
    std::size_t rest = row;
    std::vector<std::size_t> ix(f.size(), 0);
    for (std::size_t m = 0; m < f.size(); ++m) {
      if (m == mode) continue;
      ix[m] = rest % static_cast<std::size_t>(f[m].rows());
      rest /= static_cast<std::size_t>(f[m].rows());
    }
    for (Eigen::Index r = 0; r < rank; ++r) {
      double p = 1.0;
      for (std::size_t m = 0; m < f.size(); ++m)
        if (m != mode) p *= f[m](ix[m], r);
      out(row, r) = p;
    }
  }
  return out;
}

inline Eigen::MatrixXd naive_matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Eigen::MatrixXd mttkrp(const qaexpert::SparseTensor4& x, const std::vector<FactorMatrix>& f, std::size_t mode) {
  return naive_matmul(unfold(densify(x), mode), khatri_rao_chain(f, mode));
}

inline Eigen::MatrixXd gram_hadamard(const std::vector<FactorMatrix>& f, std::size_t skip) {
  const auto rank = f[0].cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Ones(rank, rank);
  for (std::size_t m = 0; m < f.size(); ++m) {
    if (m == skip) continue;
    for (Eigen::Index r = 0; r < rank; ++r)
      for (Eigen::Index s = 0; s < rank; ++s) {
        double g = 0.0;
        for (Eigen::Index i = 0; i < f[m].rows(); ++i) g += f[m](i, r) * f[m](i, s);
        v(r, s) *= g;
      }
  }
  return v;
}

inline FactorMatrix khatri_rao(const FactorMatrix& a, const FactorMatrix& b) {
  FactorMatrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index p = 0; p < a.rows(); ++p)
    for (Eigen::Index q = 0; q < b.rows(); ++q)
      for (Eigen::Index r = 0; r < a.cols(); ++r) out(p * b.rows() + q, r) = a(p, r) * b(q, r);
  return out;
}

inline DenseTensor reconstruct(const std::vector<FactorMatrix>& f, const Eigen::VectorXd& norms) {
  DenseTensor t(Dims4{static_cast<std::size_t>(f[0].rows()), static_cast<std::size_t>(f[1].rows()),
                      static_cast<std::size_t>(f[2].rows()), static_cast<std::size_t>(f[3].rows())});
  t.for_each_index([&](const Index4& ix) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < norms.size(); ++r)
      s += norms[r] * f[0](ix[0], r) * f[1](ix[1], r) * f[2](ix[2], r) * f[3](ix[3], r);
    t.at(ix) = s;
  });
  return t;
}

inline double residual_norm(const qaexpert::SparseTensor4& x, const std::vector<FactorMatrix>& f,
                            const Eigen::VectorXd& norms) {
  const DenseTensor d = densify(x);
  const DenseTensor m = reconstruct(f, norms);
  double s = 0.0;
  for (std::size_t c = 0; c < d.cells.size(); ++c) s += (d.cells[c] - m.cells[c]) * (d.cells[c] - m.cells[c]);
  return std::sqrt(s);
}

// Generators

inline FactorMatrix random_matrix(qaexpert::Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                                  double hi = 1.0) {
  FactorMatrix a(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t r = 0; r < cols; ++r) a(i, r) = lo + (hi - lo) * rng.uniform();
  return a;
}

inline Dims4 random_dims(qaexpert::Rng& rng, std::size_t max_cells) {
  for (;;) {
    Dims4 d{};
    for (auto& v : d) v = 1 + rng.below(5);
    if (d[0] * d[1] * d[2] * d[3] <= max_cells) return d;
  }
}

inline qaexpert::SparseTensor4 random_sparse(qaexpert::Rng& rng, const Dims4& dims, double density) {
  std::vector<qaexpert::TensorEntry> entries;
  DenseTensor shape(dims);
  shape.for_each_index([&](const Index4& ix) {
    if (rng.uniform() < density) entries.push_back({ix, 0.25 + 4.0 * rng.uniform()});
  });
  return qaexpert::SparseTensor4(dims, std::move(entries));
}

inline std::vector<FactorMatrix> random_factors(qaexpert::Rng& rng, const Dims4& dims, std::size_t rank,
                                                double lo = -1.0, double hi = 1.0) {
  std::vector<FactorMatrix> f;
  for (auto d : dims) f.push_back(random_matrix(rng, d, rank, lo, hi));
  return f;
}

/// Sparse tensor holding every cell of the Kruskal model (factors assumed positive).
inline qaexpert::SparseTensor4 tensor_from_model(const std::vector<FactorMatrix>& f, const Eigen::VectorXd& norms) {
  const DenseTensor m = reconstruct(f, norms);
  std::vector<qaexpert::TensorEntry> entries;
  m.for_each_index([&](const Index4& ix) { entries.push_back({ix, m.at(ix)}); });
  return qaexpert::SparseTensor4(m.dims, std::move(entries));
}

inline double max_relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracle
