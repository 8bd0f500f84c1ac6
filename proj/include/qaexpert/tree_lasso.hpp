#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qaexpert/tensor.hpp"

namespace qaexpert {

struct TreeNode {
  std::size_t level = 0;
  std::optional<std::size_t> parent;  // index into the node list
  std::vector<std::size_t> children;
  double s = 0.5;                       // internal nodes only
  double g = 0.5;
  std::optional<std::size_t> leaf_row;  // set for leaves: row of U1

  bool is_leaf() const noexcept { return leaf_row.has_value(); }
};

/**
 * Rooted tree over the rows of the question factor U1 (root, subsites,
 * topics, question leaves for the ingest layout, but any depth is allowed).
 *
 * Node 0 is the root and every parent precedes its children in the node
 * list. The group of a node is the sorted set of leaf rows beneath it.
 * Construction validates the (s, g) pairs and that every row in
 * [0, row_count) hangs off exactly one leaf.
 */
class HierarchyTree {
 public:
  HierarchyTree(std::vector<TreeNode> nodes, std::size_t row_count);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t row_count() const noexcept { return row_count_; }
  std::size_t depth() const noexcept { return depth_; }

  const std::vector<std::size_t>& group(std::size_t id) const { return groups_.at(id); }
  std::vector<std::size_t> nodes_at_level(std::size_t level) const;

 private:
  std::vector<TreeNode> nodes_;
  std::size_t row_count_ = 0;
  std::size_t depth_ = 0;
  std::vector<std::vector<std::size_t>> groups_;
};

/// Incremental construction in parent-before-child order.
class TreeBuilder {
 public:
  std::size_t add_root(double s, double g);
  std::size_t add_internal(std::size_t parent, double s, double g);
  std::size_t add_leaf(std::size_t parent, std::size_t row);
  /// Root that is itself the only leaf.
  std::size_t add_root_leaf(std::size_t row);

  HierarchyTree build(std::size_t row_count) &&;

 private:
  std::size_t push(TreeNode node);
  std::vector<TreeNode> nodes_;
};

/// Node weight: the node's g (1 for a leaf) times the product of s over all strict ancestors.
std::vector<double> compute_node_weights(const HierarchyTree& tree);

struct TreePenalty {
  HierarchyTree tree;
  double lambda_w = 0.1;
  std::vector<double> node_weights;
  std::vector<double> row_weights;
};

TreePenalty make_tree_penalty(HierarchyTree tree, double lambda_w);

/// (lambda_w / 2) * sum over nodes v of w(v) * sum_{k in G_v} ||U1 row k||^2
double weight_penalty(const FactorMatrix& u1, const TreePenalty& penalty);

/// Per-row weight w_l = sum of node weights over the groups containing row l,
/// so weight_penalty(U1) = (lambda_w / 2) * sum_l w_l ||U1 row l||^2.
std::vector<double> row_regularizer_weights(const TreePenalty& penalty);

// One node per line, indented two spaces per level:
//   "<level> <id> <parent|-> <s> <g>" for internal nodes,
//   "<level> <id> <parent|-> leaf <row>" for leaves.
void write_tree(std::ostream& out, const HierarchyTree& tree);
HierarchyTree read_tree(std::istream& in, const std::string& source = "<tree>");

}  // namespace qaexpert
