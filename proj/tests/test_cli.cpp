#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "pipeline.hpp"
#include "qaexpert/cli.hpp"
#include "qaexpert/errors.hpp"

using namespace qaexpert;
using namespace qaexpert::cli;
using pipeline::slurp;
using pipeline::TempDir;

namespace {

RunConfig with(std::size_t rank, std::uint64_t seed) {
  RunConfig c;
  c.rank = rank;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("config precedence: defaults < file < flags") {
  TempDir dir("qaexpert_cli_config");
  std::ofstream(dir / "c.json") << R"({"rank": 5, "lambda_x": 2.0, "k_list": [1, 2]})";
  const auto c = resolve_config(dir / "c.json", nlohmann::json{{"rank", 3}});
  CHECK(c.rank == 3);
  CHECK(c.lambda_x == 2.0);
  CHECK(c.lambda_w == 0.1);
  CHECK(c.k_list == std::vector<std::size_t>{1, 2});
  CHECK(resolve_config(std::nullopt, nlohmann::json::object()).rank == 2);

  CHECK_THROWS_AS(resolve_config(std::nullopt, nlohmann::json{{"rank", 0}}), ContractViolation);
  CHECK_THROWS_AS(resolve_config(std::nullopt, nlohmann::json{{"rnak", 2}}), ContractViolation);
  CHECK_THROWS_AS(resolve_config(std::nullopt, nlohmann::json{{"tree_s", {0.5}}, {"tree_g", {0.7}}}),
                  ContractViolation);
  std::ofstream(dir / "bad.json") << "{rank: ";
  CHECK_THROWS_AS(resolve_config(dir / "bad.json", nlohmann::json::object()), ParseError);

  RunConfig round;
  round.apply(c.to_json());
  CHECK(round.to_json() == c.to_json());
}

TEST_CASE("parse helpers") {
  CHECK(parse_number_list("1,3, 5,10") == std::vector<double>{1, 3, 5, 10});
  CHECK_THROWS_AS(parse_number_list("1,,2"), ContractViolation);
  CHECK_THROWS_AS(parse_number_list("1,x"), ContractViolation);
  const auto a = parse_dump_source("math=/data/m");
  CHECK(a.subsite == "math");
  CHECK(a.dir == "/data/m");
  CHECK(parse_dump_source("/data/physics/").subsite == "physics");
}

TEST_CASE("ingest of the fixture dump") {
  TempDir dir("qaexpert_cli_fixture");
  const auto dumps = pipeline::write_dumps({corpus::three_post()}, dir / "dumps");
  std::ostringstream log;
  cmd_ingest(dumps, dir / "snap", RunConfig{}, log);
  const auto snap = load_snapshot(dir / "snap");
  CHECK(snap.inputs.x.nnz() == 2);  // two answers to a single-tag question
  CHECK(snap.hash == tables_hash(snap.inputs.tables));
  CHECK(snap.manifest.at("config") == RunConfig{}.to_json());
  CHECK(snap.ledger.scores.at({20, "site/a"}) == 25);
}

TEST_CASE("tensor mass equals answer-tag events on generated corpora") {
  TempDir dir("qaexpert_cli_events");
  const auto planted = corpus::planted_corpus(4);
  const auto dumps = pipeline::write_dumps(planted.sites, dir / "dumps");
  std::ostringstream log;
  cmd_ingest(dumps, dir / "snap", RunConfig{}, log);
  const auto snap = load_snapshot(dir / "snap");
  long events = 0;
  for (const auto& site : planted.sites) {
    for (const auto& p : site.posts) {
      if (p.type != 2) continue;
      const auto q = std::find_if(site.posts.begin(), site.posts.end(), [&](const auto& r) { return r.id == p.parent; });
      events += static_cast<long>(q->tags.size());
    }
  }
  double mass = 0.0;
  for (const auto& e : snap.inputs.x.entries()) mass += e.value;
  CHECK(mass == static_cast<double>(events));
}

TEST_CASE("ingest errors leave nothing behind") {
  TempDir dir("qaexpert_cli_missing");
  auto d = corpus::three_post();
  const auto sub = d.write(dir / "dumps");
  std::filesystem::remove(sub / "Posts.xml");
  std::ostringstream log;
  try {
    cmd_ingest({{"site", sub}}, dir / "snap", RunConfig{}, log);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find((sub / "Posts.xml").string()) != std::string::npos);
  }
  CHECK((!std::filesystem::exists(dir / "snap") || std::filesystem::is_empty(dir / "snap")));
}

TEST_CASE("sampled ingest is byte-deterministic") {
  TempDir dir("qaexpert_cli_sample");
  const auto dumps = pipeline::write_dumps(corpus::planted_corpus(7).sites, dir / "dumps");
  RunConfig c;
  c.sample_users = 20;
  c.seed = 7;
  std::ostringstream log;
  cmd_ingest(dumps, dir / "a", c, log);
  cmd_ingest(dumps, dir / "b", c, log);
  for (const char* f : {"tensor.txt", "site_membership.txt", "topic_membership.txt", "tree.txt", "reputation.csv",
                        "manifest.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(load_snapshot(dir / "a").manifest.at("counts").at("users") == 20);
}

TEST_CASE("fit writes a model that round-trips and repeats") {
  TempDir dir("qaexpert_cli_fit");
  const auto dumps = pipeline::write_dumps(corpus::planted_corpus(2, 1, 2, 6, 8).sites, dir / "dumps");
  std::ostringstream log;
  cmd_ingest(dumps, dir / "snap", RunConfig{}, log);
  const auto model = cmd_fit(dir / "snap", dir / "m1", with(2, 3), log);
  cmd_fit(dir / "snap", dir / "m2", with(2, 3), log);
  CHECK(slurp(dir / "m1" / "objective_history.csv") == slurp(dir / "m2" / "objective_history.csv"));
  CHECK(slurp(dir / "m1" / "model.txt") == slurp(dir / "m2" / "model.txt"));

  const auto saved = read_model_file(dir / "m1" / "model.txt");
  CHECK(saved.snapshot_hash == load_snapshot(dir / "snap").hash);
  CHECK(saved.config == with(2, 3).to_json());
  std::ostringstream again;
  write_model_file(again, saved.model, saved.snapshot_hash, saved.config);
  CHECK(again.str() == slurp(dir / "m1" / "model.txt"));
  CHECK(saved.model.objective_history == model.objective_history);
  CHECK(saved.model.S == model.S);
  CHECK(saved.model.cp.factors[3] == model.cp.factors[3]);

  CHECK_THROWS_AS(cmd_fit(dir / "snap", dir / "m3", with(0, 3), log), ContractViolation);
  CHECK_THROWS_AS(cmd_fit(dir / "nowhere", dir / "m3", with(2, 3), log), DataError);
}

TEST_CASE("recommend") {
  TempDir dir("qaexpert_cli_recommend");
  const auto planted = corpus::planted_corpus(1);
  const auto dumps = pipeline::write_dumps(planted.sites, dir / "dumps");
  std::ostringstream log;
  cmd_ingest(dumps, dir / "snap", RunConfig{}, log);
  cmd_fit(dir / "snap", dir / "model", with(8, 1), log);
  const auto model = dir / "model" / "model.txt";

  std::size_t first = 0;
  for (const auto& [topic, expert] : planted.expert) {
    std::ostringstream out;
    cmd_recommend(dir / "snap", model, topic, 3, out);
    const auto users = pipeline::recommended_users(out.str());
    REQUIRE(users.size() == 3);
    if (users.front() == expert) ++first;
  }
  CHECK(first >= planted.expert.size() - 1);

  std::ostringstream all;
  cmd_recommend(dir / "snap", model, "site0/tag0", 100000, all);
  const auto pool = load_snapshot(dir / "snap").inputs.tables.answerers.size();
  CHECK(pipeline::recommended_users(all.str()).size() == pool);

  std::ostringstream out;
  try {
    cmd_recommend(dir / "snap", model, "site0/ta", 3, out);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).find("site0/tag1") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_recommend(dir / "snap", model, "tag0", 3, out), ContractViolation);  // in both subsites
  CHECK_THROWS_AS(cmd_recommend(dir / "snap", model, "site0/tag0", 0, out), ContractViolation);
}

TEST_CASE("evaluate") {
  TempDir dir("qaexpert_cli_evaluate");
  const auto dumps = pipeline::write_dumps(corpus::planted_corpus(5).sites, dir / "dumps");
  std::ostringstream log;
  cmd_ingest(dumps, dir / "snap", RunConfig{}, log);
  cmd_fit(dir / "snap", dir / "model", with(4, 5), log);
  std::ostringstream out;
  const auto report = cmd_evaluate(dir / "snap", dir / "model" / "model.txt", dir / "report", RunConfig{}, out);
  CHECK(report.rows.size() == 4 * report.evaluated_topics);
  CHECK(report.evaluated_topics == 6);
  std::ostringstream csv;
  write_report_csv(csv, report);
  CHECK(slurp(dir / "report" / "report.csv") == csv.str());
  const auto meta = nlohmann::json::parse(slurp(dir / "report" / "report.meta.json"));
  CHECK(meta.at("snapshot_hash") == load_snapshot(dir / "snap").hash);

  // A snapshot from a different corpus has different index tables.
  const auto other = pipeline::write_dumps(corpus::planted_corpus(6).sites, dir / "other_dumps");
  cmd_ingest(other, dir / "other", RunConfig{}, log);
  CHECK_THROWS_AS(cmd_evaluate(dir / "other", dir / "model" / "model.txt", dir / "r2", RunConfig{}, out), VersionError);
  CHECK_THROWS_AS(cmd_recommend(dir / "other", dir / "model" / "model.txt", "site0/tag0", 3, out), VersionError);

  // Tampering with the manifest tables breaks its own hash.
  auto manifest = nlohmann::json::parse(slurp(dir / "snap" / "manifest.json"));
  manifest["tables"]["topics"][0] = "site0/zzz";
  std::ofstream(dir / "snap" / "manifest.json") << manifest.dump();
  CHECK_THROWS_AS(load_snapshot(dir / "snap"), VersionError);
}
