// Copyright 2026-present the qdim project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: one subcommand per pipeline stage plus `run`.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "qdim/config.hpp"
#include "qdim/log.hpp"
#include "qdim/pipeline.hpp"
#include "qdim/synthetic.hpp"
#include "qdim/util.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string provider_endpoint;
  std::string output_dir;
  std::vector<std::string> settings;
  std::string log_level = "info";
  // embed / eval
  std::string method;
  std::optional<int> k;
  std::optional<double> lambda;
  std::optional<double> tau;
  std::string similarity;
  std::optional<int> clusters;
};

qdim::log::Level parse_level(const std::string& s) {
  if (s == "debug") return qdim::log::Level::debug;
  if (s == "info") return qdim::log::Level::info;
  if (s == "warn") return qdim::log::Level::warn;
  if (s == "error") return qdim::log::Level::error;
  if (s == "off") return qdim::log::Level::off;
  throw qdim::InvalidArgument("unknown log level '" + s + "'");
}

qdim::PipelineConfig resolve_config(const Overrides& o) {
  qdim::PipelineConfig cfg;
  if (!o.config_path.empty()) cfg = qdim::load_config(o.config_path);
  const auto cwd = std::filesystem::current_path();
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw qdim::InvalidArgument("--set expects key=value, got '" + s + "'");
    qdim::apply_setting(cfg, qdim::trim(s.substr(0, eq)), s.substr(eq + 1), cwd);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.provider_endpoint.empty()) cfg.provider.endpoint = o.provider_endpoint;
  if (!o.output_dir.empty()) cfg.paths.output_dir = o.output_dir;
  if (!o.method.empty()) cfg.embed.method = qdim::parse_embed_method(o.method);
  if (o.k) cfg.embed.k = *o.k;
  if (o.lambda) cfg.embed.lambda = *o.lambda;
  if (o.tau) cfg.embed.tau = *o.tau;
  if (!o.similarity.empty()) qdim::apply_setting(cfg, "embed.similarity", o.similarity);
  if (o.clusters) cfg.cluster.k = *o.clusters;
  cfg.validate();
  qdim::log::info("resolved config: " + cfg.to_json().dump());
  return cfg;
}

std::pair<int, std::string> classify(const std::exception& e) {
  if (dynamic_cast<const qdim::ProviderError*>(&e)) return {5, "provider_error"};
  if (dynamic_cast<const qdim::FormatError*>(&e)) return {4, "format_error"};
  if (dynamic_cast<const qdim::IoError*>(&e)) return {3, "io_error"};
  if (dynamic_cast<const qdim::InvalidArgument*>(&e)) return {2, "invalid_argument"};
  return {1, "error"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdim: interpretable sparse binary text embeddings built from yes/no questions"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config_path, "TOML configuration file");
  app.add_option("--seed", o.seed, "global seed (per-stage seeds derive from it)");
  app.add_option("--workers", o.workers, "worker threads for parallel stages");
  app.add_option("--provider-endpoint", o.provider_endpoint, "chat-completion endpoint base URL");
  app.add_option("--output-dir", o.output_dir, "directory for run artifacts");
  app.add_option("--set", o.settings, "override a config key, e.g. --set embed.k=64 (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--log-level", o.log_level, "debug, info, warn, error or off");

  std::string synth_out = "synthetic";
  qdim::SyntheticOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "write the planted synthetic corpus and a matching config");
  synth->add_option("-o,--out", synth_out, "output directory");
  synth->add_option("--topics", synth_opts.topics);
  synth->add_option("--docs-per-topic", synth_opts.docs_per_topic);
  synth->add_option("--corpus-seed", synth_opts.seed);

  auto* encode = app.add_subcommand("encode", "encode the corpus into a vector matrix");
  std::string import_path;
  auto* import = app.add_subcommand("import-vectors", "convert JSONL vectors into a vector matrix");
  import->add_option("input", import_path, "JSONL with {\"id\", \"vector\"} lines")->required();
  auto* cluster = app.add_subcommand("cluster", "k-means over the corpus vectors");
  cluster->add_option("--clusters", o.clusters, "number of clusters K");
  auto* signatures = app.add_subcommand("signatures", "per-cluster concept signatures");
  auto* genq = app.add_subcommand("genq", "generate candidate questions per cluster");
  auto* probe = app.add_subcommand("probe", "probe candidates and compute discrimination scores");
  auto* filter = app.add_subcommand("filter", "rank, filter and deduplicate into the question bank");
  auto* train = app.add_subcommand("train-heads", "train one logistic head per question");

  std::string task = "all";
  std::string doc_id;
  int top = 10;
  auto* embed = app.add_subcommand("embed", "embed every corpus document");
  auto* eval = app.add_subcommand("eval", "run evaluation tasks and write a report");
  eval->add_option("--task", task, "all, clustering, sts or retrieval");
  for (auto* sub : {embed, eval}) {
    sub->add_option("--method", o.method, "tf, tf-mmr or classifier");
    sub->add_option("--k", o.k, "active dimensions per document");
    sub->add_option("--lambda", o.lambda, "MMR relevance weight");
    sub->add_option("--tau", o.tau, "classifier activation threshold");
    sub->add_option("--similarity", o.similarity, "cosine or jaccard");
  }
  auto* explain = app.add_subcommand("explain", "show the questions active for a document");
  explain->add_option("--doc-id", doc_id)->required();
  explain->add_option("--top", top, "number of questions to show");
  auto* run = app.add_subcommand("run", "run every stage end to end");

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    qdim::log::set_level(parse_level(o.log_level));
    if (synth->parsed()) {
      const auto corpus = qdim::make_synthetic_corpus(synth_opts);
      qdim::write_synthetic_corpus(corpus, synth_out);
      const auto cfg = qdim::synthetic_config(synth_opts);
      qdim::write_file(std::filesystem::path(synth_out) / "qdim.toml", qdim::render_config_toml(cfg));
      std::cout << "wrote " << corpus.documents.size() << " documents to " << synth_out << "\n";
      return 0;
    }
    const auto cfg = resolve_config(o);
    if (encode->parsed()) qdim::stage_encode(cfg);
    else if (import->parsed()) qdim::stage_import(cfg, import_path);
    else if (cluster->parsed()) qdim::stage_cluster(cfg);
    else if (signatures->parsed()) qdim::stage_signatures(cfg);
    else if (genq->parsed()) qdim::stage_genq(cfg);
    else if (probe->parsed()) qdim::stage_probe(cfg);
    else if (filter->parsed()) qdim::stage_filter(cfg);
    else if (train->parsed()) qdim::stage_train_heads(cfg);
    else if (embed->parsed()) qdim::stage_embed(cfg);
    else if (eval->parsed()) std::cout << qdim::stage_eval(cfg, task);
    else if (explain->parsed()) std::cout << qdim::stage_explain(cfg, doc_id, top);
    else if (run->parsed()) std::cout << qdim::run_all(cfg);
    return 0;
  } catch (const std::exception& e) {
    const auto [code, kind] = classify(e);
    nlohmann::ordered_json err;
    err["error"] = {{"command", command}, {"type", kind}, {"message", e.what()}};
    if (const auto* pe = dynamic_cast<const qdim::ProviderError*>(&e); pe && pe->status() != 0) {
      err["error"]["status"] = pe->status();
    }
    std::cerr << err.dump() << std::endl;
    return code;
  }
}
