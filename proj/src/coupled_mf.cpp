#include "qaexpert/coupled_mf.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "qaexpert/factor_io.hpp"
#include "qaexpert/rng.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert {

MembershipMatrix::MembershipMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  for (const auto& [r, c] : entries_) {
    if (r >= rows_ || c >= cols_) {
      throw ContractViolation(fmt::format("membership entry ({}, {}) outside {}x{}", r, c, rows_, cols_));
    }
  }
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
}

bool MembershipMatrix::contains(std::size_t r, std::size_t c) const {
  return std::binary_search(entries_.begin(), entries_.end(), Entry{r, c});
}

FactorMatrix MembershipMatrix::times(const FactorMatrix& b) const {
  if (static_cast<std::size_t>(b.rows()) != cols_) throw ContractViolation("membership product shape mismatch");
  FactorMatrix out = FactorMatrix::Zero(rows_, b.cols());
  for (const auto& [r, c] : entries_) out.row(r) += b.row(c);
  return out;
}

FactorMatrix MembershipMatrix::transpose_times(const FactorMatrix& b) const {
  if (static_cast<std::size_t>(b.rows()) != rows_) throw ContractViolation("membership product shape mismatch");
  FactorMatrix out = FactorMatrix::Zero(cols_, b.cols());
  for (const auto& [r, c] : entries_) out.row(c) += b.row(r);
  return out;
}

void write_membership(std::ostream& out, const MembershipMatrix& m) {
  out << "membership " << m.rows() << ' ' << m.cols() << '\n';
  for (const auto& [r, c] : m.entries()) out << r << ' ' << c << '\n';
}

MembershipMatrix read_membership(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  std::string line;
  if (!reader.next(line)) reader.fail("missing membership header");
  auto tok = text::split_ws(line);
  if (tok.size() != 3 || tok[0] != "membership") reader.fail("expected 'membership rows cols'");
  const std::size_t rows = reader.to_size(tok[1]);
  const std::size_t cols = reader.to_size(tok[2]);
  std::vector<MembershipMatrix::Entry> entries;
  while (reader.next(line)) {
    tok = text::split_ws(line);
    if (tok.size() != 2) reader.fail("expected 'row col'");
    const std::size_t r = reader.to_size(tok[0]);
    const std::size_t c = reader.to_size(tok[1]);
    if (r >= rows || c >= cols) reader.fail("entry outside the matrix");
    entries.emplace_back(r, c);
  }
  return MembershipMatrix(rows, cols, std::move(entries));
}

void JointConfig::validate() const {
  if (rank < 1) throw ContractViolation("rank must be at least 1");
  if (max_sweeps < 1) throw ContractViolation("max_sweeps must be at least 1");
  if (!(tolerance >= 0.0)) throw ContractViolation("tolerance must be >= 0");
  for (double l : {lambda_x, lambda_w, lambda_s, lambda_t, lambda_site.value_or(0.0)}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ContractViolation("regularization weights must be finite and >= 0");
  }
}

JointLambdas JointConfig::lambdas() const {
  return {lambda_x, lambda_w, lambda_s, lambda_t, lambda_site.value_or(lambda_s)};
}

namespace {

double matrix_loss(const FactorMatrix& left, const FactorMatrix& a, const MembershipMatrix& m, double lambda) {
  if (static_cast<std::size_t>(left.rows()) != m.rows() || static_cast<std::size_t>(a.rows()) != m.cols() ||
      left.cols() != a.cols()) {
    throw ContractViolation(fmt::format("factor shapes {}x{} and {}x{} do not fit a {}x{} matrix", left.rows(),
                                        left.cols(), a.rows(), a.cols(), m.rows(), m.cols()));
  }
  double loss = 0.0;
  auto it = m.entries().begin();
  Eigen::RowVectorXd row(a.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    row.noalias() = left.row(r) * a.transpose();
    for (; it != m.entries().end() && it->first == r; ++it) row[it->second] -= 1.0;
    loss += row.squaredNorm();
  }
  return 0.5 * loss + 0.5 * lambda * (left.squaredNorm() + a.squaredNorm());
}

}  // namespace

double networks_objective(const FactorMatrix& s, const FactorMatrix& a, const MembershipMatrix& m, double lambda) {
  return matrix_loss(s, a, m, lambda);
}

double topic_objective(const FactorMatrix& t, const FactorMatrix& a, const MembershipMatrix& n, double lambda) {
  return matrix_loss(t, a, n, lambda);
}

FactorMatrix level1_group_means(const FactorMatrix& u1, const HierarchyTree& tree) {
  if (static_cast<std::size_t>(u1.rows()) != tree.row_count()) {
    throw ContractViolation("U1 rows do not match the tree's leaves");
  }
  const auto level1 = tree.nodes_at_level(1);
  FactorMatrix means = FactorMatrix::Zero(level1.size(), u1.cols());
  for (std::size_t j = 0; j < level1.size(); ++j) {
    const auto& g = tree.group(level1[j]);
    if (g.empty()) throw DegenerateGroupError(fmt::format("level-1 node {} has no questions", level1[j]));
    for (auto k : g) means.row(j) += u1.row(k);
    means.row(j) /= static_cast<double>(g.size());
  }
  return means;
}

double site_regularizer(const FactorMatrix& s, const FactorMatrix& u1, const HierarchyTree& tree, double lambda) {
  const FactorMatrix means = level1_group_means(u1, tree);
  if (s.rows() != means.rows() || s.cols() != u1.cols()) {
    throw ContractViolation(fmt::format("S is {}x{} but the tree has {} subsites of rank {}", s.rows(), s.cols(),
                                        means.rows(), u1.cols()));
  }
  return 0.5 * lambda * (s - means).squaredNorm();
}

namespace {

struct Blocks {
  FactorSet u;
  FactorMatrix s, a, t;
};

double blocks_objective(const SparseTensor4& x, const MembershipMatrix& m, const MembershipMatrix& n,
                        const Blocks& b, const TreePenalty& penalty, const JointLambdas& l) {
  const double r = residual_norm(x, b.u, Vector::Ones(b.u[0].cols()));
  double ridge = 0.0;
  for (const auto& f : b.u) ridge += f.squaredNorm();
  return 0.5 * r * r + 0.5 * l.x * ridge + weight_penalty(b.u[0], penalty) + networks_objective(b.s, b.a, m, l.s) +
         topic_objective(b.t, b.a, n, l.t) + site_regularizer(b.s, b.u[0], penalty.tree, l.site);
}

JointModel to_model(const Blocks& b, const JointLambdas& l) {
  JointModel model;
  model.cp = normalize_model(b.u);
  model.S = b.s;
  model.A = b.a;
  model.T = b.t;
  model.lambdas = l;
  return model;
}

// rhs * (gram + ridge I)^+ for every row.
FactorMatrix ridge_solve(const FactorMatrix& rhs, const SquareMatrix& gram, double ridge) {
  const als::RidgeSolver solver(gram, ridge);
  return rhs * solver.inverse();
}

// Exact minimizer over U1 of tensor + ridge + tree weight + subsite coupling.
// Rows of one level-1 group are coupled only through their mean, which gives
// u_k = (m_k + c) D_k^{-1} with a shared correction c per group.
FactorMatrix solve_u1(const SparseTensor4& x, const Blocks& b, const TreePenalty& penalty, const JointLambdas& l) {
  const FactorMatrix rhs = mttkrp(x, b.u, 0);
  const SquareMatrix v = gram_hadamard(b.u, 0);
  const Eigen::Index rank = rhs.cols();
  std::map<double, als::RidgeSolver> solvers;
  auto inverse_for = [&](std::size_t k) -> const SquareMatrix& {
    const double d = l.x + penalty.lambda_w * penalty.row_weights[k];
    auto it = solvers.find(d);
    if (it == solvers.end()) it = solvers.emplace(d, als::RidgeSolver(v, d)).first;
    return it->second.inverse();
  };

  FactorMatrix out(rhs.rows(), rank);
  for (Eigen::Index k = 0; k < rhs.rows(); ++k) out.row(k) = rhs.row(k) * inverse_for(k);
  if (l.site == 0.0) return out;

  const auto level1 = penalty.tree.nodes_at_level(1);
  for (std::size_t j = 0; j < level1.size(); ++j) {
    const auto& g = penalty.tree.group(level1[j]);
    const double n = static_cast<double>(g.size());
    SquareMatrix p = SquareMatrix::Zero(rank, rank);
    Eigen::RowVectorXd mean_free = Eigen::RowVectorXd::Zero(rank);
    for (auto k : g) {
      p += inverse_for(k);
      mean_free += out.row(k);
    }
    p /= n;
    mean_free /= n;
    const double w = l.site / n;
    SquareMatrix lhs = SquareMatrix::Identity(rank, rank) + w * p;
    const Eigen::RowVectorXd target = w * (b.s.row(j) - mean_free);
    // c (I + w P) = w (s_j - b); solve via the transpose.
    const Eigen::VectorXd c = lhs.transpose().colPivHouseholderQr().solve(target.transpose());
    for (auto k : g) out.row(k) += c.transpose() * inverse_for(k);
  }
  return out;
}

}  // namespace

double joint_objective(const SparseTensor4& x, const MembershipMatrix& m, const MembershipMatrix& n,
                       const JointModel& model, const TreePenalty& penalty) {
  Blocks b{model.cp.scaled_factors(), model.S, model.A, model.T};
  JointLambdas l = model.lambdas;
  return blocks_objective(x, m, n, b, penalty, l);
}

JointModel fit_joint(const SparseTensor4& x, const MembershipMatrix& m, const MembershipMatrix& n,
                     const HierarchyTree& tree, const JointConfig& config, const BlockObserver& observer) {
  config.validate();
  const JointLambdas l = config.lambdas();
  const auto& dims = x.dims();
  const std::size_t rank = config.rank;
  const std::size_t subsites = tree.nodes_at_level(1).size();
  if (tree.row_count() != dims[0]) throw ContractViolation("tree leaves do not match the question mode");
  if (m.rows() != subsites) {
    throw ContractViolation(fmt::format("site matrix has {} rows but the tree has {} subsites", m.rows(), subsites));
  }
  if (m.cols() != dims[3] || n.cols() != dims[3]) {
    throw ContractViolation("membership columns must match the answerer mode");
  }
  if (n.rows() != dims[1]) throw ContractViolation("topic matrix rows must match the topic mode");
  const TreePenalty penalty = make_tree_penalty(tree, l.w);

  Blocks b;
  if (x.nnz() == 0 && m.nnz() == 0 && n.nnz() == 0) {
    for (std::size_t k = 0; k < kOrder; ++k) b.u[k] = FactorMatrix::Zero(dims[k], rank);
    b.s = FactorMatrix::Zero(subsites, rank);
    b.a = FactorMatrix::Zero(dims[3], rank);
    b.t = FactorMatrix::Zero(dims[1], rank);
    JointModel model = to_model(b, l);
    model.objective_history = {0.0};
    model.sweeps = 0;
    model.converged = true;
    return model;
  }

  Rng rng(config.seed);
  auto draw = [&](std::size_t rows) {
    FactorMatrix f(rows, rank);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t r = 0; r < rank; ++r) f(i, r) = rng.uniform();
    return f;
  };
  for (std::size_t k = 0; k < kOrder; ++k) b.u[k] = draw(dims[k]);
  b.s = draw(subsites);
  b.a = draw(dims[3]);
  b.t = draw(dims[1]);

  auto notify = [&](std::string_view block) {
    if (observer) observer(block, blocks_objective(x, m, n, b, penalty, l));
  };
  auto check = [&](const FactorMatrix& f, std::string_view block, std::size_t sweep, const Blocks& last) {
    if (!f.allFinite()) {
      JointModel state = to_model(last, l);
      throw JointDiverged(fmt::format("non-finite {} at sweep {}", block, sweep), std::move(state));
    }
  };

  std::vector<double> history;
  double previous = blocks_objective(x, m, n, b, penalty, l);
  bool converged = false;
  std::size_t sweep = 0;
  while (sweep < config.max_sweeps) {
    ++sweep;
    const Blocks last = b;

    b.u[0] = solve_u1(x, b, penalty, l);
    check(b.u[0], "U1", sweep, last);
    notify("U1");
    for (std::size_t k = 1; k < kOrder; ++k) {
      b.u[k] = als::solve_mode(x, b.u, k, l.x);
      check(b.u[k], fmt::format("U{}", k + 1), sweep, last);
      notify(fmt::format("U{}", k + 1));
    }

    const FactorMatrix means = level1_group_means(b.u[0], tree);
    const SquareMatrix ata = b.a.transpose() * b.a;
    b.s = ridge_solve(m.times(b.a) + l.site * means, ata, l.s + l.site);
    check(b.s, "S", sweep, last);
    notify("S");

    const SquareMatrix sts = b.s.transpose() * b.s + b.t.transpose() * b.t;
    b.a = ridge_solve(m.transpose_times(b.s) + n.transpose_times(b.t), sts, l.s + l.t);
    check(b.a, "A", sweep, last);
    notify("A");

    b.t = ridge_solve(n.times(b.a), b.a.transpose() * b.a, l.t);
    check(b.t, "T", sweep, last);
    notify("T");

    const double objective = blocks_objective(x, m, n, b, penalty, l);
    if (!std::isfinite(objective)) {
      throw JointDiverged(fmt::format("non-finite objective at sweep {}", sweep), to_model(last, l));
    }
    history.push_back(objective);
    const double drop = previous - objective;
    if (previous == 0.0 || drop < config.tolerance * previous) {
      converged = true;
      break;
    }
    previous = objective;
  }

  JointModel model = to_model(b, l);
  model.objective_history = std::move(history);
  model.sweeps = sweep;
  model.converged = converged;
  return model;
}

void write_joint_model(std::ostream& out, const JointModel& model) {
  write_cp_model(out, model.cp);
  const std::pair<const char*, const FactorMatrix*> blocks[] = {{"S", &model.S}, {"A", &model.A}, {"T", &model.T}};
  for (const auto& [name, f] : blocks) {
    out << name << ' ' << f->rows() << '\n';
    write_factor_rows(out, *f);
  }
  const auto& l = model.lambdas;
  out << "lambdas";
  for (double v : {l.x, l.w, l.s, l.t, l.site}) out << ' ' << text::format_double(v);
  out << '\n';
  out << "history " << model.objective_history.size();
  for (double v : model.objective_history) out << ' ' << text::format_double(v);
  out << '\n';
  out << "joint-status " << model.sweeps << ' ' << (model.converged ? 1 : 0) << '\n';
}

JointModel read_joint_model(text::LineReader& reader) {
  JointModel model;
  model.cp = read_cp_model(reader);
  const std::size_t rank = model.cp.rank();
  std::string line;
  for (auto [name, f] : {std::pair{"S", &model.S}, std::pair{"A", &model.A}, std::pair{"T", &model.T}}) {
    if (!reader.next(line)) reader.fail(fmt::format("missing {} block", name));
    const auto tok = text::split_ws(line);
    if (tok.size() != 2 || tok[0] != name) reader.fail(fmt::format("expected '{} <rows>'", name));
    *f = read_factor_rows(reader, reader.to_size(tok[1]), rank);
  }
  if (!reader.next(line)) reader.fail("missing lambdas line");
  auto tok = text::split_ws(line);
  if (tok.empty() || tok[0] != "lambdas") reader.fail("expected 'lambdas'");
  const Vector l = parse_vector(reader, tok, 1, 5);
  model.lambdas = {l[0], l[1], l[2], l[3], l[4]};
  if (!reader.next(line)) reader.fail("missing history line");
  tok = text::split_ws(line);
  if (tok.size() < 2 || tok[0] != "history") reader.fail("expected 'history n ...'");
  const Vector h = parse_vector(reader, tok, 2, reader.to_size(tok[1]));
  model.objective_history.assign(h.data(), h.data() + h.size());
  if (!reader.next(line)) reader.fail("missing joint-status line");
  tok = text::split_ws(line);
  if (tok.size() != 3 || tok[0] != "joint-status") reader.fail("expected 'joint-status sweeps converged'");
  model.sweeps = reader.to_size(tok[1]);
  model.converged = reader.to_size(tok[2]) != 0;
  return model;
}

JointModel read_joint_model(std::istream& in, const std::string& source) {
  text::LineReader reader(in, source);
  return read_joint_model(reader);
}

}  // namespace qaexpert
