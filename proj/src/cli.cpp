#include "qaexpert/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/text_io.hpp"

namespace qaexpert::cli {

using nlohmann::json;

void RunConfig::apply(const json& j) {
  if (!j.is_object()) throw ContractViolation("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "rank") rank = v.get<std::size_t>();
      else if (key == "lambda_x") lambda_x = v.get<double>();
      else if (key == "lambda_w") lambda_w = v.get<double>();
      else if (key == "lambda_s") lambda_s = v.get<double>();
      else if (key == "lambda_t") lambda_t = v.get<double>();
      else if (key == "lambda_site") lambda_site = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (key == "tree_s") tree_s = v.is_array() ? v.get<std::vector<double>>() : std::vector{v.get<double>()};
      else if (key == "tree_g") tree_g = v.is_array() ? v.get<std::vector<double>>() : std::vector{v.get<double>()};
      else if (key == "vote_buckets") vote_buckets = v.get<std::vector<double>>();
      else if (key == "max_iters") max_iters = v.get<std::size_t>();
      else if (key == "tol") tol = v.get<double>();
      else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "sample_users") sample_users = v.get<std::size_t>();
      else if (key == "k_list") k_list = v.get<std::vector<std::size_t>>();
      else throw ContractViolation(fmt::format("unknown config key '{}'", key));
    }
  } catch (const json::exception& e) {
    throw ContractViolation(fmt::format("bad config value: {}", e.what()));
  }
}

json RunConfig::to_json() const {
  json j;
  j["rank"] = rank;
  j["lambda_x"] = lambda_x;
  j["lambda_w"] = lambda_w;
  j["lambda_s"] = lambda_s;
  j["lambda_t"] = lambda_t;
  j["lambda_site"] = lambda_site ? json(*lambda_site) : json(nullptr);
  j["tree_s"] = tree_s;
  j["tree_g"] = tree_g;
  j["vote_buckets"] = vote_buckets;
  j["max_iters"] = max_iters;
  j["tol"] = tol;
  j["seed"] = seed;
  j["sample_users"] = sample_users;
  j["k_list"] = k_list;
  return j;
}

void RunConfig::validate() const {
  if (rank < 1) throw ContractViolation("rank must be at least 1");
  if (max_iters < 1) throw ContractViolation("max_iters must be at least 1");
  if (!(tol >= 0.0)) throw ContractViolation("tol must be >= 0");
  if (k_list.empty()) throw ContractViolation("k_list is empty");
  for (auto k : k_list)
    if (k < 1) throw ContractViolation("every k must be at least 1");
  if (tree_s.size() != tree_g.size()) throw ContractViolation("tree_s and tree_g need the same number of levels");
  for (std::size_t i = 0; i < tree_s.size(); ++i) {
    if (std::abs(tree_s[i] + tree_g[i] - 1.0) > 1e-12) throw ContractViolation("tree_s + tree_g must equal 1");
  }
  build_options().validate();
  joint_config().validate();
}

BuildOptions RunConfig::build_options() const {
  BuildOptions o;
  o.vote_cuts = vote_buckets;
  o.level_weights.clear();
  for (std::size_t i = 0; i < tree_s.size(); ++i) o.level_weights.emplace_back(tree_s[i], tree_g[i]);
  return o;
}

JointConfig RunConfig::joint_config() const {
  JointConfig c;
  c.rank = rank;
  c.max_sweeps = max_iters;
  c.tolerance = tol;
  c.lambda_x = lambda_x;
  c.lambda_w = lambda_w;
  c.lambda_s = lambda_s;
  c.lambda_t = lambda_t;
  c.lambda_site = lambda_site;
  c.seed = seed;
  return c;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", p.string()));
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", p.string()));
  return in;
}

// Writes every file or none.
void write_all(const std::filesystem::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> done;
  try {
    for (const auto& [name, content] : files) {
      const auto path = dir / name;
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      done.push_back(path);
      out << content;
      out.close();
      if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
    }
  } catch (...) {
    for (const auto& p : done) std::filesystem::remove(p);
    throw;
  }
}

void check_same(const std::string& snapshot_hash, const std::string& model_hash) {
  if (snapshot_hash != model_hash) {
    throw VersionError(fmt::format("model was fitted on snapshot {} but this snapshot is {}", model_hash,
                                   snapshot_hash));
  }
}

}  // namespace

RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const json& flags) {
  RunConfig c;
  if (config_file) {
    json file;
    try {
      file = json::parse(read_file(*config_file));
    } catch (const json::parse_error& e) {
      throw ParseError(config_file->string(), 0, e.what());
    }
    c.apply(file);
  }
  c.apply(flags);
  c.validate();
  return c;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (auto tok : text::split(text, ',')) {
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ContractViolation(fmt::format("'{}' is not a number list", text));
    }
    out.push_back(v);
  }
  return out;
}

DumpSource parse_dump_source(const std::string& text) {
  const auto eq = text.find('=');
  if (eq != std::string::npos) return {text.substr(0, eq), text.substr(eq + 1)};
  std::filesystem::path p(text);
  auto name = p.filename().string();
  if (name.empty()) name = p.parent_path().filename().string();
  return {name, p};
}

json tables_to_json(const IndexTables& t) {
  json q = json::array();
  for (const auto& r : t.questions) q.push_back({r.subsite, r.id});
  return {{"subsites", t.subsites}, {"topics", t.topics},         {"questions", q},
          {"answerers", t.answerers}, {"vote_cuts", t.vote_cuts}};
}

IndexTables tables_from_json(const json& j) {
  IndexTables t;
  try {
    t.subsites = j.at("subsites").get<std::vector<std::string>>();
    t.topics = j.at("topics").get<std::vector<std::string>>();
    for (const auto& q : j.at("questions")) t.questions.push_back({q.at(0).get<std::size_t>(), q.at(1).get<PostId>()});
    t.answerers = j.at("answerers").get<std::vector<UserId>>();
    t.vote_cuts = j.at("vote_cuts").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed index tables: {}", e.what()));
  }
  return t;
}

std::string tables_hash(const IndexTables& tables) {
  const std::string canonical = tables_to_json(tables).dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Snapshot load_snapshot(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError(manifest_path.string(), 0, e.what());
  }
  if (!manifest.is_object() || !manifest.contains("tables")) {
    throw DataError(fmt::format("{} has no index tables", manifest_path.string()));
  }
  IndexTables tables = tables_from_json(manifest.at("tables"));
  std::string hash = tables_hash(tables);
  if (manifest.value("hash", std::string()) != hash) {
    throw VersionError(fmt::format("{} does not match its index tables", manifest_path.string()));
  }
  auto load = [&](const char* name, auto reader) {
    auto in = open_input(dir / name);
    return reader(in, (dir / name).string());
  };
  auto x = load("tensor.txt", [](std::istream& in, const std::string& src) { return read_tensor(in, src); });
  auto m = load("site_membership.txt", [](std::istream& in, const std::string& src) { return read_membership(in, src); });
  auto n = load("topic_membership.txt", [](std::istream& in, const std::string& src) { return read_membership(in, src); });
  auto tree = load("tree.txt", [](std::istream& in, const std::string& src) { return read_tree(in, src); });
  auto ledger = load("reputation.csv", [](std::istream& in, const std::string& src) { return read_reputation_csv(in, src); });
  const Dims4 want{tables.questions.size(), tables.topics.size(), tables.bucket_count(), tables.answerers.size()};
  if (x.dims() != want || m.rows() != tables.subsites.size() || n.rows() != tables.topics.size() ||
      tree.row_count() != tables.questions.size()) {
    throw VersionError(fmt::format("snapshot files in {} disagree with its manifest", dir.string()));
  }
  return Snapshot{ModelInputs{std::move(x), std::move(m), std::move(n), std::move(tree), std::move(tables)},
                  std::move(ledger), std::move(hash), std::move(manifest)};
}

void cmd_ingest(const std::vector<DumpSource>& dumps, const std::filesystem::path& out_dir, const RunConfig& config,
                std::ostream& log) {
  config.validate();
  if (dumps.empty()) throw ContractViolation("no dump directories given");
  std::vector<QaDataset> parts;
  for (const auto& d : dumps) {
    parts.push_back(parse_dump(d.dir / "Posts.xml", d.dir / "Votes.xml", d.dir / "Users.xml", d.subsite));
  }
  QaDataset data = merge(std::move(parts));
  if (config.sample_users > 0) data = sample_dataset(data, config.sample_users, config.seed);
  for (const auto& w : data.warnings) log << "warning: " << w << '\n';

  const ReputationLedger ledger = reputation_scores(data);
  const ModelInputs in = build_inputs(data, config.build_options());
  const std::string hash = tables_hash(in.tables);

  std::ostringstream tensor, site, topic, tree, rep;
  write_tensor(tensor, in.x);
  write_membership(site, in.m);
  write_membership(topic, in.n);
  write_tree(tree, in.tree);
  write_reputation_csv(rep, ledger);
  json manifest;
  manifest["format"] = "qa-expert-snapshot 1";
  manifest["config"] = config.to_json();
  manifest["tables"] = tables_to_json(in.tables);
  manifest["hash"] = hash;
  manifest["counts"] = {{"users", data.users.size()},
                        {"posts", data.posts.size()},
                        {"votes", data.votes.size()},
                        {"tensor_nnz", in.x.nnz()},
                        {"skipped_anonymous_downvotes", ledger.skipped_anonymous_downvotes}};
  manifest["warnings"] = data.warnings;

  write_all(out_dir, {{"tensor.txt", tensor.str()},
                      {"site_membership.txt", site.str()},
                      {"topic_membership.txt", topic.str()},
                      {"tree.txt", tree.str()},
                      {"reputation.csv", rep.str()},
                      {"manifest.json", manifest.dump(2) + "\n"}});
  log << fmt::format("ingested {} questions, {} topics, {} answerers, {} tensor nonzeros\n", in.tables.questions.size(),
                     in.tables.topics.size(), in.tables.answerers.size(), in.x.nnz());
}

void write_model_file(std::ostream& out, const JointModel& model, const std::string& snapshot_hash,
                      const json& config) {
  write_joint_model(out, model);
  out << "meta snapshot-hash " << snapshot_hash << '\n';
  out << "meta config " << config.dump() << '\n';
}

SavedModel read_model_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  text::LineReader reader(in, path.string());
  SavedModel saved;
  saved.model = read_joint_model(reader);
  std::string line;
  while (reader.next(line)) {
    if (line.rfind("meta snapshot-hash ", 0) == 0) {
      saved.snapshot_hash = line.substr(19);
    } else if (line.rfind("meta config ", 0) == 0) {
      try {
        saved.config = json::parse(line.substr(12));
      } catch (const json::parse_error& e) {
        reader.fail(e.what());
      }
    } else {
      reader.fail("unexpected line after the model");
    }
  }
  if (saved.snapshot_hash.empty()) reader.fail("missing 'meta snapshot-hash'");
  return saved;
}

JointModel cmd_fit(const std::filesystem::path& snapshot, const std::filesystem::path& out_dir,
                   const RunConfig& config, std::ostream& log) {
  config.validate();
  const Snapshot snap = load_snapshot(snapshot);
  const auto& in = snap.inputs;
  const json effective = config.to_json();
  JointModel model;
  try {
    model = fit_joint(in.x, in.m, in.n, in.tree, config.joint_config());
  } catch (const JointDiverged& e) {
    std::ostringstream s;
    write_model_file(s, e.last_state(), snap.hash, effective);
    write_all(out_dir, {{"model.txt.diverged", s.str()}});
    throw;
  }
  std::ostringstream s, history;
  write_model_file(s, model, snap.hash, effective);
  history << "sweep,objective\n";
  for (std::size_t i = 0; i < model.objective_history.size(); ++i) {
    history << i + 1 << ',' << text::format_double(model.objective_history[i]) << '\n';
  }
  write_all(out_dir, {{"model.txt", s.str()}, {"objective_history.csv", history.str()}});
  log << fmt::format("{} sweeps, objective {}{}\n", model.sweeps,
                     model.objective_history.empty() ? 0.0 : model.objective_history.back(),
                     model.converged ? "" : " (not converged)");
  return model;
}

namespace {

std::size_t resolve_topic(const IndexTables& t, const std::string& query) {
  if (auto i = t.topic_index(query)) return *i;
  std::vector<std::size_t> by_tag;
  for (std::size_t i = 0; i < t.topics.size(); ++i) {
    const auto& name = t.topics[i];
    if (name.size() > query.size() && name.compare(name.size() - query.size(), query.size(), query) == 0 &&
        name[name.size() - query.size() - 1] == '/') {
      by_tag.push_back(i);
    }
  }
  if (by_tag.size() == 1) return by_tag.front();
  std::vector<std::string> near;
  for (const auto& name : t.topics) {
    const auto slash = name.find('/');
    if (name.rfind(query, 0) == 0 || name.compare(slash + 1, query.size(), query) == 0) near.push_back(name);
  }
  std::string hint = near.empty() ? "no topic starts with it" : "did you mean: ";
  for (std::size_t i = 0; i < near.size() && i < 10; ++i) hint += (i ? ", " : "") + near[i];
  throw ContractViolation(fmt::format("unknown topic '{}' ({})", query, hint));
}

}  // namespace

void cmd_recommend(const std::filesystem::path& snapshot, const std::filesystem::path& model_file,
                   const std::string& topic, std::size_t k, std::ostream& out) {
  if (k < 1) throw ContractViolation("k must be at least 1");
  const Snapshot snap = load_snapshot(snapshot);
  const SavedModel saved = read_model_file(model_file);
  check_same(snap.hash, saved.snapshot_hash);
  const auto& t = snap.inputs.tables;
  const std::size_t index = resolve_topic(t, topic);
  const RankedList ranked = rank_experts(saved.model, index, k, t.answerers);
  out << "rank,user_id,score\n";
  for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
    out << i + 1 << ',' << ranked.entries[i].user << ',' << text::format_double(ranked.entries[i].score) << '\n';
  }
}

EvalReport cmd_evaluate(const std::filesystem::path& snapshot, const std::filesystem::path& model_file,
                        const std::filesystem::path& out_dir, const RunConfig& config, std::ostream& out) {
  config.validate();
  const Snapshot snap = load_snapshot(snapshot);
  const SavedModel saved = read_model_file(model_file);
  check_same(snap.hash, saved.snapshot_hash);
  const EvalReport report = evaluate(saved.model, snap.inputs.tables, snap.ledger, config.k_list);

  std::ostringstream csv;
  write_report_csv(csv, report);
  json meta;
  meta["config"] = config.to_json();
  meta["model_config"] = saved.config;
  meta["snapshot_hash"] = snap.hash;
  meta["evaluated_topics"] = report.evaluated_topics;
  meta["skipped_topics"] = report.skipped_topics;
  write_all(out_dir, {{"report.csv", csv.str()}, {"report.meta.json", meta.dump(2) + "\n"}});

  out << fmt::format("{} topics evaluated, {} skipped\n", report.evaluated_topics, report.skipped_topics);
  for (const auto& s : report.summary) {
    out << fmt::format("k={} precision={:.4f} mrr={:.4f}\n", s.k, s.precision, s.mrr);
  }
  return report;
}

}  // namespace qaexpert::cli
