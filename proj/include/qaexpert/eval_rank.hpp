#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qaexpert/coupled_mf.hpp"
#include "qaexpert/ingest.hpp"

namespace qaexpert {

struct RankedEntry {
  UserId user = 0;
  double score = 0.0;
};

enum class RankStatus { ok, no_signal };

/// Sorted by score descending, ties by ascending user id.
struct RankedList {
  std::size_t topic = 0;
  std::vector<RankedEntry> entries;
  RankStatus status = RankStatus::ok;
};

/// Sorts (user, score) pairs by the ranking order and keeps the first k.
RankedList make_ranked_list(std::size_t topic, std::vector<RankedEntry> entries, std::size_t k);

/**
 * score(l) = sum_r norms[r] * U2[topic, r] * U4[l, r] over every answerer l.
 * `user_ids` maps answerer rows to ids (sorted ascending); when empty the
 * row index is the id. A topic whose U2 row is zero gives an empty list
 * with status no_signal.
 */
RankedList rank_experts(const JointModel& model, std::size_t topic, std::size_t k,
                        std::span<const UserId> user_ids = {});

/// (a - q) / sqrt(a + q), 0 when both are 0.
double z_score(std::int64_t answers, std::int64_t questions);

enum class BaselineKind { best_answer_ratio, num_answers, z_score };

/// Per-user statistic over the topic's questions, for users with at least one
/// answer there. Accepted answers are the union of accepted-answer ids and
/// accept votes. The z-score counts the user's questions in the topic.
RankedList baseline_rank(const QaDataset& data, const std::string& topic, BaselineKind kind, std::size_t k);

/// |top-k of recommended ∩ relevant| / min(k, |recommended|); 0 for an empty list.
double precision_at_k(const RankedList& recommended, std::span<const UserId> relevant, std::size_t k);

double mean_reciprocal_rank(std::span<const std::size_t> ranks);

struct EvalRow {
  std::string topic;
  std::size_t k = 0;
  double precision = 0.0;
  double reciprocal_rank = 0.0;  // of the ledger's top user; 0 if the model does not rank them
  std::size_t n_candidates = 0;  // users in the model ranking
};

struct EvalSummary {
  std::size_t k = 0;
  double precision = 0.0;
  double mrr = 0.0;
  std::size_t topics = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // topic-index order, then k-list order
  std::vector<EvalSummary> summary;
  std::size_t evaluated_topics = 0;
  std::size_t skipped_topics = 0;
};

/**
 * For every topic, ranks all answerers with the model and compares against
 * the ledger restricted to the answerer table: the relevant set for k is the
 * ledger's top k, the MRR target its top user. Topics with no ledger entry
 * among the answerers are skipped and counted.
 */
EvalReport evaluate(const JointModel& model, const IndexTables& tables, const ReputationLedger& ledger,
                    std::span<const std::size_t> k_list);

/// "topic,k,precision,mrr,n_candidates" rows, then one "ALL" row per k whose
/// last column is the number of evaluated topics.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace qaexpert
