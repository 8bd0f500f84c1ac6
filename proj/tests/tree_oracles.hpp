#pragma once

#include <functional>
#include <vector>

#include "qaexpert/rng.hpp"
#include "qaexpert/tree_lasso.hpp"

namespace oracle {

/// Random tree of the given depth whose leaves carry rows 0..n-1 in creation order.
inline qaexpert::HierarchyTree random_tree(qaexpert::Rng& rng, std::size_t depth, std::size_t max_children,
                                           std::size_t* rows_out = nullptr) {
  qaexpert::TreeBuilder b;
  auto pair = [&] {
    const double s = rng.uniform();
    return std::pair{s, 1.0 - s};
  };
  auto [s0, g0] = pair();
  std::vector<std::size_t> frontier{b.add_root(s0, g0)};
  for (std::size_t level = 1; level < depth; ++level) {
    std::vector<std::size_t> next;
    for (auto parent : frontier) {
      const auto kids = 1 + rng.below(max_children);
      for (std::size_t c = 0; c < kids; ++c) {
        auto [s, g] = pair();
        next.push_back(b.add_internal(parent, s, g));
      }
    }
    frontier = std::move(next);
  }
  std::size_t rows = 0;
  for (auto parent : frontier) {
    const auto kids = 1 + rng.below(max_children);
    for (std::size_t c = 0; c < kids; ++c) b.add_leaf(parent, rows++);
  }
  if (rows_out) *rows_out = rows;
  return std::move(b).build(rows);
}

/// Node weights by top-down recursion carrying the running product of s.
inline std::vector<double> node_weights(const qaexpert::HierarchyTree& t) {
  std::vector<double> w(t.size(), 0.0);
  std::function<void(std::size_t, double)> visit = [&](std::size_t v, double above) {
    const auto& n = t.node(v);
    w[v] = n.is_leaf() ? above : above * n.g;
    for (auto c : n.children) visit(c, above * n.s);
  };
  visit(0, 1.0);
  return w;
}

inline void leaves_below(const qaexpert::HierarchyTree& t, std::size_t v, std::vector<std::size_t>& out) {
  const auto& n = t.node(v);
  if (n.is_leaf()) out.push_back(*n.leaf_row);
  for (auto c : n.children) leaves_below(t, c, out);
}

/// (lambda/2) * sum_v w_v * sum_{k under v} ||row k||^2 by explicit traversal.
inline double weight_penalty(const qaexpert::FactorMatrix& u1, const qaexpert::HierarchyTree& t,
                             const std::vector<double>& w, double lambda) {
  double total = 0.0;
  for (std::size_t v = 0; v < t.size(); ++v) {
    std::vector<std::size_t> rows;
    leaves_below(t, v, rows);
    for (auto k : rows)
      for (Eigen::Index r = 0; r < u1.cols(); ++r) total += w[v] * u1(k, r) * u1(k, r);
  }
  return 0.5 * lambda * total;
}

}  // namespace oracle
