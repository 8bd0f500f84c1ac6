#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qaexpert/coupled_mf.hpp"
#include "qaexpert/tensor.hpp"
#include "qaexpert/tree_lasso.hpp"

namespace qaexpert {

using UserId = std::int64_t;
using PostId = std::int64_t;

enum class PostKind { question, answer };
enum class VoteKind { accept, upvote, downvote };

struct Post {
  PostId id = 0;
  std::size_t subsite = 0;  // index into QaDataset::subsites
  PostKind kind = PostKind::question;
  std::optional<PostId> parent;           // answers
  std::optional<UserId> owner;
  std::optional<PostId> accepted_answer;  // questions
  std::vector<std::string> tags;          // questions
  std::optional<std::int64_t> score;
};

struct Vote {
  PostId post = 0;
  std::size_t subsite = 0;
  std::optional<UserId> voter;
  VoteKind kind = VoteKind::upvote;
};

struct IngestCounters {
  std::size_t unknown_vote_kinds = 0;
  std::size_t other_post_kinds = 0;
  std::size_t votes_on_missing_posts = 0;
  std::size_t dangling_accepts = 0;
  std::size_t missing_owners = 0;
};

/**
 * Posts, votes and users of one or more subsites.
 *
 * Posts are keyed by (subsite, id); user ids are shared across subsites.
 * Posts are sorted by (subsite, id), votes by (subsite, post, kind, voter).
 * Invariants: every answer's parent is a question of the same subsite, an
 * accepted-answer id names an answer of that question, only questions
 * carry tags.
 */
struct QaDataset {
  std::vector<std::string> subsites;
  std::vector<UserId> users;  // sorted, unique
  std::vector<Post> posts;
  std::vector<Vote> votes;
  IngestCounters counters;
  std::vector<std::string> warnings;

  const Post* find(std::size_t subsite, PostId id) const;
  /// "subsite/tag" strings of every question tag, sorted.
  std::vector<std::string> topic_names() const;
  /// Throws DataError if an invariant is broken.
  void validate() const;
};

std::string topic_name(const std::string& subsite, const std::string& tag);

/// Reads Posts.xml, Votes.xml and Users.xml rows of one subsite. A file that
/// is empty or whitespace only contributes nothing.
QaDataset parse_dump(const std::filesystem::path& posts_file, const std::filesystem::path& votes_file,
                     const std::filesystem::path& users_file, const std::string& subsite_name);

/// Same, from streams; `source` prefixes error messages.
QaDataset parse_dump(std::istream& posts, std::istream& votes, std::istream& users, const std::string& subsite_name,
                     const std::string& source = "<dump>");

/// Concatenates subsites (names must be distinct) and unions the user tables.
QaDataset merge(std::vector<QaDataset> parts);

/**
 * Picks n_users users uniformly without replacement (partial Fisher-Yates on
 * the sorted user table, seeded Rng) and keeps the questions they own, the
 * answers they own or that answer their questions, the questions parenting
 * kept answers, and votes on kept posts. The user table becomes the sample.
 */
QaDataset sample_dataset(const QaDataset& data, std::size_t n_users, std::uint64_t seed);

struct ReputationLedger {
  std::map<std::pair<UserId, std::string>, std::int64_t> scores;  // (user, topic) -> reputation
  std::size_t skipped_anonymous_downvotes = 0;

  /// Users with an entry for the topic, by score descending then id ascending.
  std::vector<std::pair<UserId, std::int64_t>> ranking(const std::string& topic) const;
};

/// Answer upvote +10, question upvote +5, post downvoted -2 to its owner,
/// downvoting an answer -1 to the voter, accepted answer +15. Each event
/// counts once per tag of the governing question.
ReputationLedger reputation_scores(const QaDataset& data);

/// "user_id,topic,score" with a header, rows sorted by (user, topic).
void write_reputation_csv(std::ostream& out, const ReputationLedger& ledger);
ReputationLedger read_reputation_csv(std::istream& in, const std::string& source = "<reputation>");

struct QuestionRef {
  std::size_t subsite = 0;
  PostId id = 0;
  bool operator==(const QuestionRef&) const = default;
};

/// Entity tables behind every tensor and matrix index.
struct IndexTables {
  std::vector<std::string> subsites;   // M rows, level-1 tree nodes
  std::vector<std::string> topics;     // "subsite/tag": tensor mode 1, N rows
  std::vector<QuestionRef> questions;  // tensor mode 0, tree leaves
  std::vector<UserId> answerers;       // tensor mode 3, M and N columns; sorted
  std::vector<double> vote_cuts;       // bucket k holds cuts[k-1] <= score < cuts[k]

  std::size_t bucket_count() const noexcept { return vote_cuts.size() + 1; }
  std::size_t bucket(double score) const;
  std::optional<std::size_t> topic_index(const std::string& topic) const;
};

struct BuildOptions {
  std::vector<double> vote_cuts{0.0, 1.0, 3.0, 10.0};
  /// (s, g) for internal nodes by level: root, subsites, topics. A single pair
  /// applies to every level.
  std::vector<std::pair<double, double>> level_weights{{0.5, 0.5}};

  void validate() const;
};

struct ModelInputs {
  SparseTensor4 x;
  MembershipMatrix m;
  MembershipMatrix n;
  HierarchyTree tree;
  IndexTables tables;
};

/**
 * Tagged questions become tensor rows, sorted by (subsite, first tag, id)
 * so that each topic's leaves are contiguous; a question sits in the tree
 * under its first tag. Cell (i, j, k, l) counts answers by user l to
 * question i for each tag j of i, with k the bucket of the question's score
 * (the Score attribute, else net votes). Answers without an owner are
 * skipped. Subsites without tagged questions are dropped.
 */
ModelInputs build_inputs(const QaDataset& data, const BuildOptions& options = {});

}  // namespace qaexpert
