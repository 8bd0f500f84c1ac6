#include "qaexpert/tree_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert {

namespace {

constexpr double kWeightSumTolerance = 1e-12;

void check_pair(double s, double g) {
  if (!(s >= 0.0 && s <= 1.0 && g >= 0.0 && g <= 1.0) || std::abs(s + g - 1.0) > kWeightSumTolerance) {
    throw ContractViolation(fmt::format("tree node weights (s={}, g={}) must lie in [0,1] and sum to 1", s, g));
  }
}

}  // namespace

HierarchyTree::HierarchyTree(std::vector<TreeNode> nodes, std::size_t row_count)
    : nodes_(std::move(nodes)), row_count_(row_count) {
  if (nodes_.empty()) throw ContractViolation("tree has no nodes");
  if (nodes_[0].parent) throw ContractViolation("node 0 must be the root");

  std::vector<int> seen(row_count_, 0);
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    auto& n = nodes_[id];
    if (id > 0) {
      if (!n.parent || *n.parent >= id) {
        throw ContractViolation(fmt::format("node {} must have a parent listed before it", id));
      }
      const auto& p = nodes_[*n.parent];
      if (p.is_leaf()) throw ContractViolation(fmt::format("node {} hangs off leaf {}", id, *n.parent));
      if (n.level != p.level + 1) throw ContractViolation(fmt::format("node {} has inconsistent level", id));
    } else if (n.level != 0) {
      throw ContractViolation("root must be at level 0");
    }
    if (n.is_leaf()) {
      if (!n.children.empty()) throw ContractViolation(fmt::format("leaf {} has children", id));
      if (*n.leaf_row >= row_count_) {
        throw ContractViolation(fmt::format("leaf {} row {} out of range ({} rows)", id, *n.leaf_row, row_count_));
      }
      if (seen[*n.leaf_row]++) throw ContractViolation(fmt::format("row {} appears in more than one leaf", *n.leaf_row));
    } else {
      check_pair(n.s, n.g);
    }
    depth_ = std::max(depth_, n.level);
  }
  for (std::size_t r = 0; r < row_count_; ++r) {
    if (!seen[r]) throw ContractViolation(fmt::format("row {} is not attached to any leaf", r));
  }

  // Children lists are rebuilt from parents so callers cannot disagree with them.
  for (auto& n : nodes_) n.children.clear();
  for (std::size_t id = 1; id < nodes_.size(); ++id) nodes_[*nodes_[id].parent].children.push_back(id);

  groups_.assign(nodes_.size(), {});
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    auto& grp = groups_[id];
    if (nodes_[id].is_leaf()) {
      grp.push_back(*nodes_[id].leaf_row);
    } else {
      for (auto c : nodes_[id].children) grp.insert(grp.end(), groups_[c].begin(), groups_[c].end());
      std::sort(grp.begin(), grp.end());
    }
  }
}

std::vector<std::size_t> HierarchyTree::nodes_at_level(std::size_t level) const {
  std::vector<std::size_t> out;
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].level == level) out.push_back(id);
  return out;
}

std::size_t TreeBuilder::push(TreeNode node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

std::size_t TreeBuilder::add_root(double s, double g) {
  if (!nodes_.empty()) throw ContractViolation("tree already has a root");
  return push(TreeNode{0, std::nullopt, {}, s, g, std::nullopt});
}

std::size_t TreeBuilder::add_root_leaf(std::size_t row) {
  if (!nodes_.empty()) throw ContractViolation("tree already has a root");
  return push(TreeNode{0, std::nullopt, {}, 0.0, 1.0, row});
}

std::size_t TreeBuilder::add_internal(std::size_t parent, double s, double g) {
  return push(TreeNode{nodes_.at(parent).level + 1, parent, {}, s, g, std::nullopt});
}

std::size_t TreeBuilder::add_leaf(std::size_t parent, std::size_t row) {
  return push(TreeNode{nodes_.at(parent).level + 1, parent, {}, 0.0, 1.0, row});
}

HierarchyTree TreeBuilder::build(std::size_t row_count) && { return HierarchyTree(std::move(nodes_), row_count); }

std::vector<double> compute_node_weights(const HierarchyTree& tree) {
  const auto& nodes = tree.nodes();
  // ancestor_s[v] = product of s over the strict ancestors of v
  std::vector<double> ancestor_s(nodes.size(), 1.0);
  std::vector<double> weights(nodes.size(), 0.0);
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const auto& n = nodes[id];
    if (n.parent) ancestor_s[id] = ancestor_s[*n.parent] * nodes[*n.parent].s;
    if (n.is_leaf()) {
      weights[id] = ancestor_s[id];
    } else {
      check_pair(n.s, n.g);
      weights[id] = n.g * ancestor_s[id];
    }
  }
  return weights;
}

TreePenalty make_tree_penalty(HierarchyTree tree, double lambda_w) {
  if (!(lambda_w >= 0.0) || !std::isfinite(lambda_w)) throw ContractViolation("lambda_w must be finite and >= 0");
  TreePenalty p{std::move(tree), lambda_w, {}, {}};
  p.node_weights = compute_node_weights(p.tree);
  p.row_weights = row_regularizer_weights(p);
  return p;
}

double weight_penalty(const FactorMatrix& u1, const TreePenalty& penalty) {
  const auto& tree = penalty.tree;
  if (static_cast<std::size_t>(u1.rows()) != tree.row_count()) {
    throw ContractViolation(
        fmt::format("U1 has {} rows but the tree indexes {} leaves", u1.rows(), tree.row_count()));
  }
  const auto weights =
      penalty.node_weights.size() == tree.size() ? penalty.node_weights : compute_node_weights(tree);
  double total = 0.0;
  for (std::size_t id = 0; id < tree.size(); ++id) {
    double group_sq = 0.0;
    for (auto k : tree.group(id)) group_sq += u1.row(k).squaredNorm();
    total += weights[id] * group_sq;
  }
  return 0.5 * penalty.lambda_w * total;
}

std::vector<double> row_regularizer_weights(const TreePenalty& penalty) {
  const auto& tree = penalty.tree;
  const auto weights =
      penalty.node_weights.size() == tree.size() ? penalty.node_weights : compute_node_weights(tree);
  std::vector<double> out(tree.row_count(), 0.0);
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    if (!n.is_leaf()) continue;
    double w = 0.0;
    for (std::optional<std::size_t> v = id; v; v = tree.node(*v).parent) w += weights[*v];
    out[*n.leaf_row] = w;
  }
  return out;
}

void write_tree(std::ostream& out, const HierarchyTree& tree) {
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    out << std::string(2 * n.level, ' ') << n.level << ' ' << id << ' ';
    if (n.parent) {
      out << *n.parent;
    } else {
      out << '-';
    }
    if (n.is_leaf()) {
      out << " leaf " << *n.leaf_row << '\n';
    } else {
      out << ' ' << text::format_double(n.s) << ' ' << text::format_double(n.g) << '\n';
    }
  }
}

HierarchyTree read_tree(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  std::vector<TreeNode> nodes;
  std::size_t leaves = 0;
  std::string line;
  while (reader.next(line)) {
    const auto tok = text::split_ws(line);
    if (tok.size() != 5) reader.fail("expected 'level id parent s g' or 'level id parent leaf row'");
    TreeNode n;
    n.level = reader.to_size(tok[0]);
    if (reader.to_size(tok[1]) != nodes.size()) reader.fail("node ids must be consecutive from 0");
    if (tok[2] != "-") n.parent = reader.to_size(tok[2]);
    if (tok[3] == "leaf") {
      n.leaf_row = reader.to_size(tok[4]);
      n.s = 0.0;
      n.g = 1.0;
      ++leaves;
    } else {
      n.s = reader.to_double(tok[3]);
      n.g = reader.to_double(tok[4]);
    }
    nodes.push_back(std::move(n));
  }
  if (nodes.empty()) reader.fail("empty tree");
  try {
    return HierarchyTree(std::move(nodes), leaves);
  } catch (const ContractViolation& e) {
    throw ParseError(source, reader.line_number(), e.what());
  }
}

}  // namespace qaexpert
