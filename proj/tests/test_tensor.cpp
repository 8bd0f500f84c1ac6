#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "qaexpert/errors.hpp"
#include "qaexpert/tensor.hpp"

using namespace qaexpert;

namespace {

FactorMatrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  FactorMatrix m(rows.size(), rows.begin()->size());
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("sparse tensor sums duplicates and sorts") {
  SparseTensor4 x({2, 2, 1, 1}, {{{1, 0, 0, 0}, 2.0}, {{0, 1, 0, 0}, 1.0}, {{1, 0, 0, 0}, 3.0}});
  REQUIRE(x.nnz() == 2);
  CHECK(x.coordinate(0) == Index4{0, 1, 0, 0});
  CHECK(x.coordinate(1) == Index4{1, 0, 0, 0});
  CHECK(x.value(1) == 5.0);
  CHECK(x.cell_count() == 4);
}

TEST_CASE("sparse tensor rejects out-of-range indices and negative values") {
  CHECK_THROWS_AS(SparseTensor4({2, 2, 2, 2}, {{{2, 0, 0, 0}, 1.0}}), ContractViolation);
  CHECK_THROWS_AS(SparseTensor4({2, 2, 2, 2}, {{{0, 0, 0, 0}, -1.0}}), ContractViolation);
  CHECK_THROWS_AS(SparseTensor4({0, 2, 2, 2}, {}), ContractViolation);
}

TEST_CASE("mode row grouping covers every nonzero once") {
  Rng rng(11);
  const auto x = oracle::random_sparse(rng, {3, 4, 2, 5}, 0.4);
  for (std::size_t m = 0; m < kOrder; ++m) {
    const auto& rows = x.rows_of(m);
    CHECK(rows.offsets.back() == x.nnz());
    for (std::size_t i = 0; i < x.dim(m); ++i)
      for (auto p = rows.offsets[i]; p < rows.offsets[i + 1]; ++p) CHECK(x.index(m, rows.order[p]) == i);
  }
}

TEST_CASE("khatri_rao examples") {
  const auto kr = khatri_rao(mat({{1, 0}, {0, 1}}), mat({{1, 2}, {3, 4}}));
  CHECK(kr == mat({{1, 0}, {3, 0}, {0, 2}, {0, 4}}));

  const auto ones = khatri_rao(FactorMatrix::Ones(2, 1), FactorMatrix::Ones(3, 1));
  CHECK(ones == FactorMatrix::Ones(6, 1));

  Rng rng(3);
  const auto a = oracle::random_matrix(rng, 3, 2);
  const auto b = oracle::random_matrix(rng, 4, 2);
  const auto got = khatri_rao(a, b);
  REQUIRE(got.rows() == 12);
  for (Eigen::Index p = 0; p < 3; ++p)
    for (Eigen::Index q = 0; q < 4; ++q)
      for (Eigen::Index r = 0; r < 2; ++r) CHECK(got(p * 4 + q, r) == a(p, r) * b(q, r));

  CHECK_THROWS_AS(khatri_rao(FactorMatrix::Ones(2, 1), FactorMatrix::Ones(2, 2)), ContractViolation);
}

TEST_CASE("gram_hadamard examples") {
  std::vector<FactorMatrix> ones(3, FactorMatrix::Ones(2, 2));
  CHECK(gram_hadamard(ones, 1) == SquareMatrix::Constant(2, 2, 4.0));

  std::vector<FactorMatrix> eye(4, FactorMatrix::Identity(2, 2));
  for (std::size_t skip = 0; skip < 4; ++skip) CHECK(gram_hadamard(eye, skip) == SquareMatrix::Identity(2, 2));

  Rng rng(5);
  const auto f = oracle::random_factors(rng, {3, 4, 2, 5}, 3);
  for (std::size_t skip = 0; skip < 4; ++skip) {
    const SquareMatrix v = gram_hadamard(f, skip);
    CHECK(oracle::max_relative_error(v, oracle::gram_hadamard(f, skip)) < 1e-12);
    CHECK(v == v.transpose());
    Eigen::SelfAdjointEigenSolver<SquareMatrix> eig(v);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * v.trace());
  }

  std::vector<FactorMatrix> bad{FactorMatrix::Ones(2, 2), FactorMatrix::Ones(2, 3)};
  CHECK_THROWS_AS(gram_hadamard(bad, 0), ContractViolation);
  CHECK_THROWS_AS(gram_hadamard(ones, 7), ContractViolation);
}

TEST_CASE("mttkrp of an all-zero tensor is zero") {
  SparseTensor4 x({2, 3, 2, 2}, {});
  Rng rng(1);
  const auto f = oracle::random_factors(rng, x.dims(), 2);
  for (std::size_t m = 0; m < 4; ++m) CHECK(mttkrp(x, f, m).isZero(0.0));
}

TEST_CASE("mttkrp on a rank-1 2x2x2x2 tensor") {
  // X = a ∘ b ∘ c ∘ d, so mode-0 MTTKRP against the same factors is
  // a * (b.b)(c.c)(d.d).
  const std::vector<FactorMatrix> f{mat({{1}, {2}}), mat({{1}, {3}}), mat({{2}, {1}}), mat({{1}, {1}})};
  const auto x = oracle::tensor_from_model(f, Eigen::VectorXd::Ones(1));
  const auto m0 = mttkrp(x, f, 0);
  CHECK(m0(0, 0) == doctest::Approx(1.0 * 10 * 5 * 2));
  CHECK(m0(1, 0) == doctest::Approx(2.0 * 10 * 5 * 2));
  CHECK(oracle::max_relative_error(m0, oracle::mttkrp(x, f, 0)) < 1e-12);
}

TEST_CASE("mttkrp matches the dense oracle on every mode") {
  Rng rng(2024);
  const auto x = oracle::random_sparse(rng, {3, 4, 2, 5}, 0.35);
  const auto f = oracle::random_factors(rng, x.dims(), 3);
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(oracle::max_relative_error(mttkrp(x, f, m), oracle::mttkrp(x, f, m)) < 1e-10);
  }
}

TEST_CASE("parallel mttkrp is bitwise equal to the serial reference") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dims = oracle::random_dims(rng, 256);
    const auto x = oracle::random_sparse(rng, dims, 0.5);
    const auto f = oracle::random_factors(rng, dims, 4);
    for (std::size_t m = 0; m < 4; ++m) CHECK(mttkrp(x, f, m) == reference::mttkrp(x, f, m));
  }
}

TEST_CASE("mttkrp rejects mismatched factors") {
  SparseTensor4 x({2, 2, 2, 2}, {});
  std::vector<FactorMatrix> f(4, FactorMatrix::Ones(2, 2));
  f[2] = FactorMatrix::Ones(3, 2);
  CHECK_THROWS_AS(mttkrp(x, f, 0), ContractViolation);
  f[2] = FactorMatrix::Ones(2, 1);
  CHECK_THROWS_AS(mttkrp(x, f, 0), ContractViolation);
}

TEST_CASE("reconstruct_entry examples") {
  const std::vector<FactorMatrix> ones(4, FactorMatrix::Ones(2, 1));
  CHECK(reconstruct_entry(ones, Vector::Ones(1), {1, 0, 1, 0}) == 1.0);

  const std::vector<FactorMatrix> f{mat({{2}}), mat({{3}}), mat({{1}}), mat({{0.5}})};
  CHECK(reconstruct_entry(f, Vector::Ones(1), {0, 0, 0, 0}) == 3.0);

  Rng rng(8);
  const Dims4 dims{3, 4, 2, 5};
  const auto g = oracle::random_factors(rng, dims, 3);
  Vector norms(3);
  norms << 1.5, 0.25, 2.0;
  const auto dense = oracle::reconstruct(g, norms);
  for (int t = 0; t < 20; ++t) {
    const Index4 ix{rng.below(3), rng.below(4), rng.below(2), rng.below(5)};
    CHECK(reconstruct_entry(g, norms, ix) == doctest::Approx(dense.at(ix)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(reconstruct_entry(g, norms, {3, 0, 0, 0}), ContractViolation);
}

TEST_CASE("residual_norm examples") {
  Rng rng(17);
  const Dims4 dims{3, 2, 2, 4};
  const auto gen = oracle::random_factors(rng, dims, 1, 0.5, 2.0);
  const auto x = oracle::tensor_from_model(gen, Vector::Ones(1));
  CHECK(residual_norm(x, gen, Vector::Ones(1)) <= 1e-9);

  const std::vector<FactorMatrix> zero{FactorMatrix::Zero(3, 2), FactorMatrix::Zero(2, 2), FactorMatrix::Zero(2, 2),
                                       FactorMatrix::Zero(4, 2)};
  const auto y = oracle::random_sparse(rng, dims, 0.3);
  CHECK(residual_norm(y, zero, Vector::Ones(2)) == doctest::Approx(y.frobenius_norm()).epsilon(1e-15));

  const auto f = oracle::random_factors(rng, dims, 3);
  const Vector norms = Vector::Constant(3, 0.7);
  const double want = oracle::residual_norm(y, f, norms);
  CHECK(std::abs(residual_norm(y, f, norms) - want) <= 1e-8 * want);
  CHECK(std::abs(reference::residual_norm(y, f, norms) - want) <= 1e-8 * want);
}

TEST_CASE("residual_norm does not depend on the entry order") {
  Rng rng(4);
  const Dims4 dims{4, 3, 2, 3};
  const auto x = oracle::random_sparse(rng, dims, 0.4);
  auto shuffled = x.entries();
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  const SparseTensor4 y(dims, shuffled);
  const auto f = oracle::random_factors(rng, dims, 2);
  CHECK(residual_norm(x, f, Vector::Ones(2)) == residual_norm(y, f, Vector::Ones(2)));
}

TEST_CASE("parallel residual matches the serial reference") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dims = oracle::random_dims(rng, 256);
    const auto x = oracle::random_sparse(rng, dims, 0.6);
    const auto f = oracle::random_factors(rng, dims, 3);
    const Vector norms = Vector::Ones(3);
    const double a = residual_norm(x, f, norms);
    const double b = reference::residual_norm(x, f, norms);
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, b));
  }
}

TEST_CASE("tensor text format round trips") {
  Rng rng(6);
  const auto x = oracle::random_sparse(rng, {3, 4, 2, 5}, 0.3);
  std::stringstream s;
  write_tensor(s, x);
  const auto y = read_tensor(s);
  CHECK(y.dims() == x.dims());
  REQUIRE(y.nnz() == x.nnz());
  for (std::size_t e = 0; e < x.nnz(); ++e) {
    CHECK(y.coordinate(e) == x.coordinate(e));
    CHECK(y.value(e) == x.value(e));
  }
}

TEST_CASE("tensor reader reports the failing line") {
  std::stringstream s("dims 2 2 2 2\n0 0 0 0 1\n0 0 5 0 1\n");
  try {
    read_tensor(s, "t.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::stringstream bad("dim 2 2\n");
  CHECK_THROWS_AS(read_tensor(bad), ParseError);
}
