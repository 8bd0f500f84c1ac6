// qa_expert: ingest Stack Exchange dumps, fit the joint model, recommend and evaluate.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qaexpert/cli.hpp"
#include "qaexpert/errors.hpp"

using namespace qaexpert;
using nlohmann::json;

namespace {

enum Exit { ok = 0, other = 1, usage = 2, data = 3, diverged = 4, version = 5 };

struct Flags {
  std::optional<std::size_t> rank, max_iters, sample_users;
  std::optional<double> lambda_x, lambda_w, lambda_s, lambda_t, lambda_site, tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> tree_s, tree_g, vote_buckets, k_list;
  std::optional<std::string> config;

  void add_model(CLI::App* app) {
    app->add_option("--rank", rank, "latent rank R");
    app->add_option("--lambda-x", lambda_x, "tensor term weight");
    app->add_option("--lambda-w", lambda_w, "tree penalty weight");
    app->add_option("--lambda-s", lambda_s, "site matrix weight");
    app->add_option("--lambda-t", lambda_t, "topic matrix weight");
    app->add_option("--lambda-site", lambda_site, "site coupling weight (default: lambda-s)");
    app->add_option("--max-iters", max_iters, "maximum sweeps");
    app->add_option("--tol", tol, "relative objective tolerance");
  }
  void add_ingest(CLI::App* app) {
    app->add_option("--tree-s", tree_s, "per-level s weights, comma separated");
    app->add_option("--tree-g", tree_g, "per-level g weights, comma separated");
    app->add_option("--vote-buckets", vote_buckets, "vote bucket cut points, comma separated");
    app->add_option("--sample-users", sample_users, "sample this many users (0 = all)");
  }
  void add_common(CLI::App* app) {
    app->add_option("--seed", seed, "random seed");
    app->add_option("--config", config, "JSON config file");
  }

  json to_json() const {
    json j = json::object();
    auto put = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    auto put_list = [&](const char* key, const std::optional<std::string>& v) {
      if (v) j[key] = cli::parse_number_list(*v);
    };
    put("rank", rank);
    put("lambda_x", lambda_x);
    put("lambda_w", lambda_w);
    put("lambda_s", lambda_s);
    put("lambda_t", lambda_t);
    put("lambda_site", lambda_site);
    put("max_iters", max_iters);
    put("tol", tol);
    put("seed", seed);
    put("sample_users", sample_users);
    put_list("tree_s", tree_s);
    put_list("tree_g", tree_g);
    put_list("vote_buckets", vote_buckets);
    if (k_list) {
      std::vector<std::size_t> ks;
      for (double v : cli::parse_number_list(*k_list)) {
        if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v)))
          throw ContractViolation(fmt::format("'{}' is not a list of positive integers", *k_list));
        ks.push_back(static_cast<std::size_t>(v));
      }
      j["k_list"] = ks;
    }
    return j;
  }

  cli::RunConfig resolve() const {
    return cli::resolve_config(config ? std::optional<std::filesystem::path>(*config) : std::nullopt, to_json());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert recommendation for Stack Exchange subsites"};
  app.require_subcommand(1);
  Flags flags;
  std::string out_dir = ".";
  std::vector<std::string> dumps;
  std::string snapshot, model_file, topic;
  std::size_t k = 10;

  auto* ingest = app.add_subcommand("ingest", "parse dumps into a snapshot directory");
  ingest->add_option("--dump", dumps, "subsite dump directory, or name=dir")->required();
  ingest->add_option("--out-dir", out_dir, "snapshot directory");
  flags.add_ingest(ingest);
  flags.add_common(ingest);

  auto* fit = app.add_subcommand("fit", "fit the joint model on a snapshot");
  fit->add_option("--snapshot", snapshot, "snapshot directory")->required();
  fit->add_option("--out-dir", out_dir, "model directory");
  flags.add_model(fit);
  flags.add_common(fit);

  auto* recommend = app.add_subcommand("recommend", "rank experts for a topic");
  recommend->add_option("--snapshot", snapshot, "snapshot directory")->required();
  recommend->add_option("--model", model_file, "model file")->required();
  recommend->add_option("--topic", topic, "subsite/tag, or a tag unique across subsites")->required();
  recommend->add_option("--k", k, "number of experts");

  auto* evaluate = app.add_subcommand("evaluate", "score the model against the reputation ledger");
  evaluate->add_option("--snapshot", snapshot, "snapshot directory")->required();
  evaluate->add_option("--model", model_file, "model file")->required();
  evaluate->add_option("--out-dir", out_dir, "report directory");
  evaluate->add_option("--k-list", flags.k_list, "cutoffs, comma separated");
  flags.add_common(evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (ingest->parsed()) {
      std::vector<cli::DumpSource> sources;
      for (const auto& d : dumps) sources.push_back(cli::parse_dump_source(d));
      cli::cmd_ingest(sources, out_dir, flags.resolve(), std::cerr);
    } else if (fit->parsed()) {
      cli::cmd_fit(snapshot, out_dir, flags.resolve(), std::cerr);
    } else if (recommend->parsed()) {
      cli::cmd_recommend(snapshot, model_file, topic, k, std::cout);
    } else if (evaluate->parsed()) {
      cli::cmd_evaluate(snapshot, model_file, out_dir, flags.resolve(), std::cout);
    }
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const VersionError& e) {
    std::cerr << "version error: " << e.what() << '\n';
    return version;
  } catch (const SolverDiverged& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return diverged;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return data;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const EmptyInputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return other;
  }
  return ok;
}
