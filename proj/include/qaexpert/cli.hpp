#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaexpert/coupled_mf.hpp"
#include "qaexpert/eval_rank.hpp"
#include "qaexpert/ingest.hpp"

namespace qaexpert::cli {

/// Every tunable of the four commands. Keys in JSON are the flag names with
/// dashes replaced by underscores (rank, lambda_x, vote_buckets, ...).
struct RunConfig {
  std::size_t rank = 2;
  double lambda_x = 0.1;
  double lambda_w = 0.1;
  double lambda_s = 0.1;
  double lambda_t = 0.1;
  std::optional<double> lambda_site;  // defaults to lambda_s
  std::vector<double> tree_s{0.5};    // per internal level, or one for all
  std::vector<double> tree_g{0.5};
  std::vector<double> vote_buckets{0.0, 1.0, 3.0, 10.0};
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::size_t sample_users = 0;  // 0 keeps every user
  std::vector<std::size_t> k_list{1, 3, 5, 10};

  /// Overrides the fields present in `j`; unknown keys are an error.
  void apply(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  BuildOptions build_options() const;
  JointConfig joint_config() const;
};

/// defaults < config file < flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const nlohmann::json& flags);

/// Comma-separated numbers, e.g. "1,3,5,10".
std::vector<double> parse_number_list(const std::string& text);

struct DumpSource {
  std::string subsite;
  std::filesystem::path dir;  // holds Posts.xml, Votes.xml, Users.xml
};

/// "name=path" or a bare path whose last component names the subsite.
DumpSource parse_dump_source(const std::string& text);

/// SHA-256 hex digest of the canonical JSON of the index tables.
std::string tables_hash(const IndexTables& tables);

nlohmann::json tables_to_json(const IndexTables& tables);
IndexTables tables_from_json(const nlohmann::json& j);

/// Everything the fit, recommend and evaluate commands read from a snapshot.
struct Snapshot {
  ModelInputs inputs;
  ReputationLedger ledger;
  std::string hash;
  nlohmann::json manifest;
};

Snapshot load_snapshot(const std::filesystem::path& dir);

/**
 * Parses the dumps, optionally samples users, and writes tensor.txt,
 * site_membership.txt, topic_membership.txt, tree.txt, reputation.csv and
 * manifest.json to out_dir. Nothing is left behind on failure.
 */
void cmd_ingest(const std::vector<DumpSource>& dumps, const std::filesystem::path& out_dir, const RunConfig& config,
                std::ostream& log);

/// Fits the joint model and writes model.txt and objective_history.csv to
/// out_dir. On divergence writes model.txt.diverged and rethrows.
JointModel cmd_fit(const std::filesystem::path& snapshot, const std::filesystem::path& out_dir,
                   const RunConfig& config, std::ostream& log);

/// Prints "rank,user_id,score" lines for the topic ("subsite/tag", or a tag
/// that names exactly one topic).
void cmd_recommend(const std::filesystem::path& snapshot, const std::filesystem::path& model_file,
                   const std::string& topic, std::size_t k, std::ostream& out);

/// Writes report.csv and report.meta.json to out_dir and prints the summary.
EvalReport cmd_evaluate(const std::filesystem::path& snapshot, const std::filesystem::path& model_file,
                        const std::filesystem::path& out_dir, const RunConfig& config, std::ostream& out);

struct SavedModel {
  JointModel model;
  std::string snapshot_hash;
  nlohmann::json config;
};

void write_model_file(std::ostream& out, const JointModel& model, const std::string& snapshot_hash,
                      const nlohmann::json& config);
SavedModel read_model_file(const std::filesystem::path& path);

}  // namespace qaexpert::cli
