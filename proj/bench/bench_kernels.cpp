// Serial reference kernels against the OpenMP ones on random sparse tensors.

#include <benchmark/benchmark.h>

#include "qaexpert/rng.hpp"
#include "qaexpert/tensor.hpp"

using namespace qaexpert;

namespace {

struct Problem {
  SparseTensor4 x;
  std::vector<FactorMatrix> factors;
  Vector norms;
};

// Roughly question x topic x bucket x answerer shaped, with nnz ~ 8 per question.
Problem make_problem(std::size_t questions, std::size_t rank) {
  Rng rng(17);
  const Dims4 dims{questions, 40, 5, questions / 4 + 1};
  std::vector<TensorEntry> entries;
  for (std::size_t e = 0; e < 8 * questions; ++e) {
    entries.push_back({{rng.below(dims[0]), rng.below(dims[1]), rng.below(dims[2]), rng.below(dims[3])},
                       1.0 + static_cast<double>(rng.below(3))});
  }
  Problem p{SparseTensor4(dims, entries), {}, Vector::Ones(rank)};
  for (std::size_t m = 0; m < 4; ++m) {
    FactorMatrix f(dims[m], rank);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform();
    p.factors.push_back(std::move(f));
  }
  return p;
}

void BM_mttkrp_serial(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 8);
  for (auto _ : state)
    for (std::size_t m = 0; m < 4; ++m) benchmark::DoNotOptimize(reference::mttkrp(p.x, p.factors, m));
  state.SetItemsProcessed(state.iterations() * 4 * p.x.nnz());
}

void BM_mttkrp_parallel(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 8);
  for (auto _ : state)
    for (std::size_t m = 0; m < 4; ++m) benchmark::DoNotOptimize(mttkrp(p.x, p.factors, m));
  state.SetItemsProcessed(state.iterations() * 4 * p.x.nnz());
}

void BM_residual_serial(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(reference::residual_norm(p.x, p.factors, p.norms));
  state.SetItemsProcessed(state.iterations() * p.x.nnz());
}

void BM_residual_parallel(benchmark::State& state) {
  const auto p = make_problem(state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(residual_norm(p.x, p.factors, p.norms));
  state.SetItemsProcessed(state.iterations() * p.x.nnz());
}

}  // namespace

BENCHMARK(BM_mttkrp_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 16)->UseRealTime();
BENCHMARK(BM_mttkrp_parallel)->RangeMultiplier(8)->Range(1 << 10, 1 << 16)->UseRealTime();
BENCHMARK(BM_residual_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 16)->UseRealTime();
BENCHMARK(BM_residual_parallel)->RangeMultiplier(8)->Range(1 << 10, 1 << 16)->UseRealTime();

BENCHMARK_MAIN();
