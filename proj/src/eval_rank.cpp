#include "qaexpert/eval_rank.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert {

RankedList make_ranked_list(std::size_t topic, std::vector<RankedEntry> entries, std::size_t k) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.score != b.score ? a.score > b.score : a.user < b.user;
  });
  if (entries.size() > k) entries.resize(k);
  return {topic, std::move(entries), RankStatus::ok};
}

RankedList rank_experts(const JointModel& model, std::size_t topic, std::size_t k, std::span<const UserId> user_ids) {
  if (k < 1) throw ContractViolation("k must be at least 1");
  const auto& topics = model.cp.factors[1];
  const auto& users = model.cp.factors[3];
  if (topic >= static_cast<std::size_t>(topics.rows())) {
    throw ContractViolation(fmt::format("topic {} outside the model's {} topics", topic, topics.rows()));
  }
  if (!user_ids.empty() && user_ids.size() != static_cast<std::size_t>(users.rows())) {
    throw ContractViolation("user id table does not match the answerer mode");
  }
  if (topics.row(topic).isZero(0.0)) return {topic, {}, RankStatus::no_signal};
  const Eigen::RowVectorXd weights = topics.row(topic).cwiseProduct(model.cp.norms.transpose());
  std::vector<RankedEntry> entries;
  entries.reserve(users.rows());
  for (Eigen::Index l = 0; l < users.rows(); ++l) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < users.cols(); ++r) s += weights[r] * users(l, r);
    entries.push_back({user_ids.empty() ? static_cast<UserId>(l) : user_ids[l], s});
  }
  return make_ranked_list(topic, std::move(entries), k);
}

double z_score(std::int64_t answers, std::int64_t questions) {
  if (answers < 0 || questions < 0) throw ContractViolation("counts must be nonnegative");
  if (answers + questions == 0) return 0.0;
  return static_cast<double>(answers - questions) / std::sqrt(static_cast<double>(answers + questions));
}

RankedList baseline_rank(const QaDataset& data, const std::string& topic, BaselineKind kind, std::size_t k) {
  if (k < 1) throw ContractViolation("k must be at least 1");
  const auto names = data.topic_names();
  const auto pos = std::lower_bound(names.begin(), names.end(), topic);
  if (pos == names.end() || *pos != topic) throw ContractViolation(fmt::format("unknown topic {}", topic));
  const auto topic_index = static_cast<std::size_t>(pos - names.begin());

  auto in_topic = [&](const Post& q) {
    return std::any_of(q.tags.begin(), q.tags.end(),
                       [&](const std::string& t) { return topic_name(data.subsites[q.subsite], t) == topic; });
  };
  std::set<std::pair<std::size_t, PostId>> accepted;
  for (const auto& p : data.posts)
    if (p.kind == PostKind::question && p.accepted_answer) accepted.insert({p.subsite, *p.accepted_answer});
  for (const auto& v : data.votes)
    if (v.kind == VoteKind::accept && data.find(v.subsite, v.post)->kind == PostKind::answer)
      accepted.insert({v.subsite, v.post});

  struct Stats {
    std::int64_t answers = 0, accepted = 0, questions = 0;
  };
  std::map<UserId, Stats> stats;
  for (const auto& p : data.posts) {
    if (!p.owner) continue;
    if (p.kind == PostKind::question) {
      if (in_topic(p)) ++stats[*p.owner].questions;
    } else if (in_topic(*data.find(p.subsite, *p.parent))) {
      auto& s = stats[*p.owner];
      ++s.answers;
      if (accepted.count({p.subsite, p.id})) ++s.accepted;
    }
  }
  std::vector<RankedEntry> entries;
  for (const auto& [user, s] : stats) {
    if (s.answers == 0) continue;
    double score = 0.0;
    switch (kind) {
      case BaselineKind::best_answer_ratio: score = static_cast<double>(s.accepted) / static_cast<double>(s.answers); break;
      case BaselineKind::num_answers: score = static_cast<double>(s.answers); break;
      case BaselineKind::z_score: score = z_score(s.answers, s.questions); break;
    }
    entries.push_back({user, score});
  }
  return make_ranked_list(topic_index, std::move(entries), k);
}

double precision_at_k(const RankedList& recommended, std::span<const UserId> relevant, std::size_t k) {
  if (k < 1) throw ContractViolation("k must be at least 1");
  const std::size_t n = std::min(k, recommended.entries.size());
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(relevant.begin(), relevant.end(), recommended.entries[i].user) != relevant.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double mean_reciprocal_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ContractViolation("mean_reciprocal_rank needs at least one rank");
  double total = 0.0;
  for (auto r : ranks) {
    if (r < 1) throw ContractViolation("ranks start at 1");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

EvalReport evaluate(const JointModel& model, const IndexTables& tables, const ReputationLedger& ledger,
                    std::span<const std::size_t> k_list) {
  for (auto k : k_list)
    if (k < 1) throw ContractViolation("k values must be at least 1");
  const auto& answerers = tables.answerers;
  const std::size_t pool = answerers.size();
  EvalReport report;
  for (auto k : k_list) report.summary.push_back({k, 0.0, 0.0, 0});

  for (std::size_t t = 0; t < tables.topics.size(); ++t) {
    std::vector<UserId> truth;
    for (const auto& [user, score] : ledger.ranking(tables.topics[t]))
      if (std::binary_search(answerers.begin(), answerers.end(), user)) truth.push_back(user);
    if (truth.empty()) {
      ++report.skipped_topics;
      continue;
    }
    ++report.evaluated_topics;
    const RankedList ranked = rank_experts(model, t, std::max<std::size_t>(pool, 1), answerers);
    double rr = 0.0;
    for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
      if (ranked.entries[i].user == truth.front()) {
        rr = 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
      const std::size_t k = k_list[ki];
      const std::span<const UserId> relevant(truth.data(), std::min(k, truth.size()));
      const double p = precision_at_k(ranked, relevant, k);
      report.rows.push_back({tables.topics[t], k, p, rr, ranked.entries.size()});
      auto& s = report.summary[ki];
      s.precision += p;
      s.mrr += rr;
      ++s.topics;
    }
  }
  for (auto& s : report.summary) {
    if (s.topics == 0) continue;
    s.precision /= static_cast<double>(s.topics);
    s.mrr /= static_cast<double>(s.topics);
  }
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "topic,k,precision,mrr,n_candidates\n";
  for (const auto& r : report.rows) {
    out << r.topic << ',' << r.k << ',' << text::format_double(r.precision) << ','
        << text::format_double(r.reciprocal_rank) << ',' << r.n_candidates << '\n';
  }
  for (const auto& s : report.summary) {
    out << "ALL," << s.k << ',' << text::format_double(s.precision) << ',' << text::format_double(s.mrr) << ','
        << s.topics << '\n';
  }
}

}  // namespace qaexpert
