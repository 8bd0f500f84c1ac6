#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/ingest.hpp"

namespace qaexpert {

std::size_t IndexTables::bucket(double score) const {
  return static_cast<std::size_t>(std::upper_bound(vote_cuts.begin(), vote_cuts.end(), score) - vote_cuts.begin());
}

std::optional<std::size_t> IndexTables::topic_index(const std::string& topic) const {
  auto it = std::lower_bound(topics.begin(), topics.end(), topic);
  if (it == topics.end() || *it != topic) return std::nullopt;
  return static_cast<std::size_t>(it - topics.begin());
}

void BuildOptions::validate() const {
  if (!std::is_sorted(vote_cuts.begin(), vote_cuts.end()) ||
      std::adjacent_find(vote_cuts.begin(), vote_cuts.end()) != vote_cuts.end()) {
    throw ContractViolation("vote bucket cuts must be strictly increasing");
  }
  for (double c : vote_cuts)
    if (!std::isfinite(c)) throw ContractViolation("vote bucket cuts must be finite");
  if (level_weights.size() != 1 && level_weights.size() != 3) {
    throw ContractViolation("tree weights need one (s, g) pair or one per internal level");
  }
}

ModelInputs build_inputs(const QaDataset& data, const BuildOptions& options) {
  options.validate();
  IndexTables tables;
  tables.vote_cuts = options.vote_cuts;
  tables.topics = data.topic_names();

  // Net votes per question, used when the dump has no Score.
  std::map<std::pair<std::size_t, PostId>, std::int64_t> net;
  for (const auto& v : data.votes) {
    if (v.kind == VoteKind::upvote) ++net[{v.subsite, v.post}];
    if (v.kind == VoteKind::downvote) --net[{v.subsite, v.post}];
  }

  struct Row {
    std::size_t subsite;
    std::size_t topic;
    PostId id;
    const Post* post;
  };
  std::vector<Row> rows;
  for (const auto& p : data.posts) {
    if (p.kind != PostKind::question || p.tags.empty()) continue;
    const auto t = tables.topic_index(topic_name(data.subsites[p.subsite], p.tags.front()));
    rows.push_back({p.subsite, *t, p.id, &p});
  }
  if (rows.empty()) throw EmptyInputError("dataset has no tagged questions");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.subsite, a.topic, a.id) < std::tie(b.subsite, b.topic, b.id);
  });

  std::map<std::pair<std::size_t, PostId>, std::size_t> row_of;
  std::vector<std::size_t> subsite_row(data.subsites.size(), SIZE_MAX);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tables.questions.push_back({rows[i].subsite, rows[i].id});
    row_of[{rows[i].subsite, rows[i].id}] = i;
    if (subsite_row[rows[i].subsite] == SIZE_MAX) {
      subsite_row[rows[i].subsite] = tables.subsites.size();
      tables.subsites.push_back(data.subsites[rows[i].subsite]);
    }
  }

  std::vector<const Post*> answers;
  for (const auto& p : data.posts) {
    if (p.kind == PostKind::answer && p.owner && row_of.count({p.subsite, *p.parent})) {
      answers.push_back(&p);
      tables.answerers.push_back(*p.owner);
    }
  }
  std::sort(tables.answerers.begin(), tables.answerers.end());
  tables.answerers.erase(std::unique(tables.answerers.begin(), tables.answerers.end()), tables.answerers.end());
  if (tables.answerers.empty()) throw EmptyInputError("no owned answers to tagged questions");
  auto user_index = [&](UserId u) {
    return static_cast<std::size_t>(std::lower_bound(tables.answerers.begin(), tables.answerers.end(), u) -
                                    tables.answerers.begin());
  };

  std::vector<TensorEntry> entries;
  std::vector<MembershipMatrix::Entry> site_pairs, topic_pairs;
  for (const Post* a : answers) {
    const std::size_t i = row_of.at({a->subsite, *a->parent});
    const Post& q = *rows[i].post;
    const double score = static_cast<double>(q.score ? *q.score : net[{q.subsite, q.id}]);
    const std::size_t k = tables.bucket(score);
    const std::size_t l = user_index(*a->owner);
    site_pairs.emplace_back(subsite_row[q.subsite], l);
    for (const auto& tag : q.tags) {
      const std::size_t j = *tables.topic_index(topic_name(data.subsites[q.subsite], tag));
      entries.push_back({{i, j, k, l}, 1.0});
      topic_pairs.emplace_back(j, l);
    }
  }

  const Dims4 dims{rows.size(), tables.topics.size(), tables.bucket_count(), tables.answerers.size()};
  SparseTensor4 x(dims, std::move(entries));
  MembershipMatrix m(tables.subsites.size(), dims[3], std::move(site_pairs));
  MembershipMatrix n(tables.topics.size(), dims[3], std::move(topic_pairs));

  auto weights = [&](std::size_t level) {
    return options.level_weights.size() == 1 ? options.level_weights[0] : options.level_weights[level];
  };
  TreeBuilder b;
  const auto [root_s, root_g] = weights(0);
  const auto root = b.add_root(root_s, root_g);
  std::size_t site_node = 0, topic_node = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool new_site = i == 0 || rows[i].subsite != rows[i - 1].subsite;
    if (new_site) {
      const auto [s, g] = weights(1);
      site_node = b.add_internal(root, s, g);
    }
    if (new_site || rows[i].topic != rows[i - 1].topic) {
      const auto [s, g] = weights(2);
      topic_node = b.add_internal(site_node, s, g);
    }
    b.add_leaf(topic_node, i);
  }
  return {std::move(x), std::move(m), std::move(n), std::move(b).build(rows.size()), std::move(tables)};
}

}  // namespace qaexpert
