#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qaexpert/cp_als.hpp"
#include "qaexpert/errors.hpp"
#include "qaexpert/tree_lasso.hpp"

namespace qaexpert {

/// Binary sparse matrix stored as sorted unique (row, col) pairs.
class MembershipMatrix {
 public:
  using Entry = std::pair<std::size_t, std::size_t>;

  MembershipMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool contains(std::size_t r, std::size_t c) const;

  /// This * b, rows() x b.cols().
  FactorMatrix times(const FactorMatrix& b) const;
  /// This^T * b, cols() x b.cols().
  FactorMatrix transpose_times(const FactorMatrix& b) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Entry> entries_;
};

// "membership <rows> <cols>" then one "<row> <col>" line per nonzero.
void write_membership(std::ostream& out, const MembershipMatrix& m);
MembershipMatrix read_membership(std::istream& in, const std::string& source = "<membership>");

struct JointLambdas {
  double x = 0.1;
  double w = 0.1;
  double s = 0.1;
  double t = 0.1;
  double site = 0.1;  // weight of the subsite/group-mean coupling
};

struct JointConfig {
  std::size_t rank = 2;
  std::size_t max_sweeps = 100;
  double tolerance = 1e-6;  // relative objective decrease per sweep
  double lambda_x = 0.1;
  double lambda_w = 0.1;
  double lambda_s = 0.1;
  double lambda_t = 0.1;
  std::optional<double> lambda_site;  // defaults to lambda_s
  std::uint64_t seed = 0;

  void validate() const;
  JointLambdas lambdas() const;
};

struct JointModel {
  CpModel cp;
  FactorMatrix S;  // subsites x R
  FactorMatrix A;  // answerers x R
  FactorMatrix T;  // topics x R
  JointLambdas lambdas;
  std::vector<double> objective_history;  // joint objective after each sweep
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Non-finite iterate inside fit_joint. Holds the state at the start of the failing sweep.
class JointDiverged : public SolverDiverged {
 public:
  JointDiverged(const std::string& what, JointModel last) : SolverDiverged(what), last_(std::move(last)) {}
  const JointModel& last_state() const noexcept { return last_; }

 private:
  JointModel last_;
};

/// 0.5 ||M - S A^T||^2 + (lambda / 2)(||S||^2 + ||A||^2), zeros in M counted as observed.
double networks_objective(const FactorMatrix& s, const FactorMatrix& a, const MembershipMatrix& m, double lambda);
/// Same form for the topic matrix.
double topic_objective(const FactorMatrix& t, const FactorMatrix& a, const MembershipMatrix& n, double lambda);

/// Mean U1 row of each level-1 node, in node order. Throws DegenerateGroupError on an empty group.
FactorMatrix level1_group_means(const FactorMatrix& u1, const HierarchyTree& tree);

/// (lambda / 2) sum_j ||S_j - mean of U1 rows under the j-th level-1 node||^2.
double site_regularizer(const FactorMatrix& s, const FactorMatrix& u1, const HierarchyTree& tree, double lambda);

/// Tensor + Weight + Networks + Topic + Site terms; lambdas come from the model,
/// except lambda_w which is the penalty's.
double joint_objective(const SparseTensor4& x, const MembershipMatrix& m, const MembershipMatrix& n,
                       const JointModel& model, const TreePenalty& penalty);

/// Called after every block update with the block name and the objective.
using BlockObserver = std::function<void(std::string_view block, double objective)>;

/**
 * Block coordinate descent on the joint objective.
 *
 * Each sweep solves, exactly and in order, U1 (tree ridge plus the
 * subsite coupling, solved group by group in closed form), U2, U3, U4
 * (ridge ALS), S, A and T (ridge least squares). Every block update is
 * the minimizer over that block, so the objective never increases.
 * Subsite j of M and S is the j-th level-1 node of the tree. Row indices
 * of M's and N's columns are the tensor's mode-3 (answerer) indices.
 *
 * Stops when the relative decrease of the objective over a sweep drops
 * below the tolerance. All-zero data gives the all-zero model.
 */
JointModel fit_joint(const SparseTensor4& x, const MembershipMatrix& m, const MembershipMatrix& n,
                     const HierarchyTree& tree, const JointConfig& config, const BlockObserver& observer = {});

// write_cp_model block, then "S <rows>", "A <rows>", "T <rows>" factor
// blocks, "lambdas x w s t site", "history <n> ...", "joint-status <sweeps> <converged>".
void write_joint_model(std::ostream& out, const JointModel& model);
JointModel read_joint_model(text::LineReader& reader);
JointModel read_joint_model(std::istream& in, const std::string& source = "<joint-model>");

}  // namespace qaexpert
