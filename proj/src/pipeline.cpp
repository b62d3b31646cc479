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

#include "qdim/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "qdim/clustering.hpp"
#include "qdim/embedding.hpp"
#include "qdim/eval.hpp"
#include "qdim/log.hpp"
#include "qdim/ontology.hpp"
#include "qdim/questions.hpp"
#include "qdim/util.hpp"

namespace qdim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void require_input(const std::filesystem::path& path, const std::string& stage) {
  if (path.empty() || !std::filesystem::exists(path)) {
    throw IoError(stage + ": missing input '" + path.string() + "'");
  }
}

std::string file_digest(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::shared_ptr<const TextEncoder> resolve(const TextEncoder* given, const PipelineConfig& config,
                                           std::shared_ptr<const TextEncoder>& owned) {
  if (given) return std::shared_ptr<const TextEncoder>(given, [](const TextEncoder*) {});
  owned = make_encoder(config);
  return owned;
}

const GenerationProvider& resolve(const GenerationProvider* given, const PipelineConfig& config,
                                  std::shared_ptr<const GenerationProvider>& owned) {
  if (given) return *given;
  owned = make_provider(config);
  return *owned;
}

ClusterModel load_model(const PipelineConfig& config, const std::string& stage) {
  const auto a = artifacts(config);
  require_input(a.centroids, stage);
  require_input(a.assignments, stage);
  return load_cluster_model(a.centroids, a.assignments);
}

QuestionBank load_run_bank(const PipelineConfig& config, const std::string& stage) {
  const auto a = artifacts(config);
  require_input(a.bank, stage);
  require_input(a.bank_vectors, stage);
  return load_bank(a.bank, a.bank_vectors);
}

std::vector<LinearHead> maybe_heads(const PipelineConfig& config, const QuestionBank& bank, const std::string& stage) {
  if (config.embed.method != EmbedMethod::classifier) return {};
  const auto a = artifacts(config);
  require_input(a.heads, stage);
  auto heads = load_heads(a.heads, bank.bank_hash());
  if (static_cast<int>(heads.size()) != bank.size()) {
    throw FormatError(stage + ": heads file has " + std::to_string(heads.size()) + " heads for a bank of " +
                      std::to_string(bank.size()));
  }
  return heads;
}

}  // namespace

Artifacts artifacts(const PipelineConfig& config) {
  const auto& d = config.paths.output_dir;
  return {d / "centroids.qvm",  d / "assignments.jsonl", d / "signatures.jsonl", d / "candidates.jsonl",
          d / "probes.jsonl",   d / "bank.json",         d / "bank.qvm",         d / "heads.json",
          d / "embeddings.jsonl", d / "report.json",     d / "report.txt"};
}

std::shared_ptr<const TextEncoder> make_encoder(const PipelineConfig& config) {
  if (config.encoder.kind == "keyword") {
    require_input(config.encoder.vocabulary, "encoder");
    return std::make_shared<KeywordEncoder>(KeywordEncoder::from_file(config.encoder.vocabulary));
  }
  if (config.encoder.kind == "http") {
    HttpSettings s;
    s.endpoint = config.encoder.endpoint;
    s.model = config.encoder.model;
    s.api_key_env = config.provider.api_key_env;
    s.max_retries = config.provider.max_retries;
    return std::make_shared<HttpEmbeddingEncoder>(s, config.encoder.dim,
                                                  static_cast<std::size_t>(config.encoder.batch_size));
  }
  throw InvalidArgument("unknown encoder kind '" + config.encoder.kind + "'");
}

std::shared_ptr<const GenerationProvider> make_provider(const PipelineConfig& config) {
  if (config.provider.kind == "mock") return std::make_shared<KeywordRuleProvider>();
  if (config.provider.kind == "http") {
    HttpSettings s;
    s.endpoint = config.provider.endpoint;
    s.model = config.provider.model;
    s.api_key_env = config.provider.api_key_env;
    s.temperature = config.provider.temperature;
    s.max_tokens = config.provider.max_tokens;
    s.max_retries = config.provider.max_retries;
    return std::make_shared<ChatCompletionProvider>(s);
  }
  throw InvalidArgument("unknown provider kind '" + config.provider.kind + "'");
}

ordered_json config_snapshot(const PipelineConfig& config) {
  auto j = config.to_json();
  j.erase("paths");
  j.erase("workers");
  j["encoder"].erase("vocabulary");
  j["generation"].erase("prompt_template");
  j["encoder"].erase("endpoint");
  j["provider"].erase("endpoint");
  j["provider"].erase("api_key_env");
  for (const char* key : {"clustering", "sts", "queries", "retrieval_corpus", "qrels"}) j["eval"].erase(key);
  return j;
}

void stage_encode(const PipelineConfig& config, const TextEncoder* encoder) {
  require_input(config.paths.corpus, "encode");
  std::shared_ptr<const TextEncoder> owned;
  const auto enc = resolve(encoder, config, owned);
  std::vector<std::string> order;
  const auto texts = load_texts(config.paths.corpus, &order);
  std::vector<std::string> batch;
  batch.reserve(order.size());
  for (const auto& id : order) batch.push_back(texts.at(id));
  const auto vectors = enc->encode(batch);
  save_matrix(VectorMatrix::from_rows(order, vectors, enc->dim()), config.paths.vectors);
  log::info("encode: " + std::to_string(order.size()) + " documents -> " + config.paths.vectors.string());
}

void stage_import(const PipelineConfig& config, const std::filesystem::path& jsonl) {
  require_input(jsonl, "import-vectors");
  const auto m = import_jsonl(jsonl);
  save_matrix(m, config.paths.vectors);
  log::info("import-vectors: " + std::to_string(m.size()) + " vectors of dim " + std::to_string(m.dim()));
}

void stage_cluster(const PipelineConfig& config) {
  require_input(config.paths.vectors, "cluster");
  const auto corpus = load_matrix(config.paths.vectors, true);
  KMeansOptions options;
  options.max_iter = config.cluster.max_iter;
  options.tol = config.cluster.tol;
  options.workers = config.workers;
  const auto model = kmeans(corpus, config.cluster.k, derive_seed(config.seed, "cluster"), options);
  std::filesystem::create_directories(config.paths.output_dir);
  const auto a = artifacts(config);
  save_cluster_model(model, a.centroids, a.assignments);
  log::info("cluster: K=" + std::to_string(model.k()) + " inertia=" + std::to_string(model.inertia()) +
            " iterations=" + std::to_string(model.inertia_history().size()));
}

void stage_signatures(const PipelineConfig& config) {
  const auto model = load_model(config, "signatures");
  require_input(config.paths.annotations, "signatures");
  const auto annotations = load_annotations(config.paths.annotations);
  if (annotations.skipped > 0) {
    log::warn("signatures: skipped " + std::to_string(annotations.skipped) + " malformed annotation lines");
  }
  ConceptDictionary dictionary;
  const ConceptDictionary* dict = nullptr;
  if (!config.paths.concepts.empty()) {
    require_input(config.paths.concepts, "signatures");
    dictionary = load_concept_dictionary(config.paths.concepts);
    dict = &dictionary;
  }
  std::size_t unknown = 0;
  const auto sigs =
      build_all_signatures(model, annotations.annotations, config.generation.top_n_concepts, dict, &unknown);
  if (unknown > 0) log::warn("signatures: " + std::to_string(unknown) + " annotated documents are not clustered");
  save_signatures(sigs, artifacts(config).signatures);
  log::info("signatures: " + std::to_string(sigs.size()) + " clusters");
}

void stage_genq(const PipelineConfig& config, const GenerationProvider* provider) {
  const auto a = artifacts(config);
  const auto model = load_model(config, "genq");
  require_input(a.signatures, "genq");
  require_input(config.paths.corpus, "genq");
  const auto sigs = load_signatures(a.signatures);
  if (static_cast<int>(sigs.size()) != model.k()) {
    throw FormatError("genq: " + std::to_string(sigs.size()) + " signatures for " + std::to_string(model.k()) +
                      " clusters; rerun signatures");
  }
  const auto texts = load_texts(config.paths.corpus);
  std::shared_ptr<const GenerationProvider> owned;
  const auto& llm = resolve(provider, config, owned);
  const auto assignments_hash = file_digest(a.assignments);
  std::string prompt_template = default_prompt_template();
  if (!config.generation.prompt_template.empty()) {
    require_input(config.generation.prompt_template, "genq");
    prompt_template = read_file(config.generation.prompt_template);
  }

  const auto k = static_cast<std::size_t>(model.k());
  std::vector<std::string> lines(k);
  parallel_for(k, config.workers, [&](std::size_t c) {
    const int cid = static_cast<int>(c);
    ContrastiveSample sample;
    try {
      sample = sample_contrastive(model, cid, config.generation.sampling,
                                  derive_seed(config.seed, "genq/cluster/" + std::to_string(c)));
    } catch (const InvalidArgument& e) {
      log::warn(std::string("genq: skipping ") + e.what());
      return;
    }
    const auto prompt = assemble_prompt(sample, texts, sigs[c], config.generation.n_questions, prompt_template);
    const auto questions = parse_questions(llm.complete(prompt));
    if (questions.empty()) log::warn("genq: cluster " + std::to_string(c) + " produced no parseable questions");
    ordered_json line;
    line["cluster"] = cid;
    line["positives"] = sample.positives;
    line["negatives"] = sample.negatives();
    line["questions"] = questions;
    line["assignments_sha256"] = assignments_hash;
    lines[c] = line.dump() + "\n";
  });
  std::string out;
  std::size_t total = 0;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    out += l;
    total += json::parse(l)["questions"].size();
  }
  write_file(a.candidates, out);
  log::info("genq: " + std::to_string(total) + " candidate questions");
}

void stage_probe(const PipelineConfig& config, const GenerationProvider* provider) {
  const auto a = artifacts(config);
  require_input(a.candidates, "probe");
  require_input(a.assignments, "probe");
  require_input(config.paths.corpus, "probe");
  const auto rows = read_jsonl(a.candidates);
  const auto assignments_hash = file_digest(a.assignments);
  const auto texts = load_texts(config.paths.corpus);
  auto lookup = [&](const std::string& id) -> const std::string& {
    auto it = texts.find(id);
    if (it == texts.end()) throw InvalidArgument("probe: no text for document '" + id + "'");
    return it->second;
  };

  struct Job {
    int cluster;
    std::string question;
    std::vector<std::string> pos;
    std::vector<std::string> neg;
  };
  std::vector<Job> jobs;
  for (const auto& r : rows) {
    if (r.at("assignments_sha256").get<std::string>() != assignments_hash) {
      throw FormatError("probe: candidates were generated from a different clustering; rerun genq");
    }
    std::vector<std::string> pos;
    std::vector<std::string> neg;
    for (const auto& id : r.at("positives")) pos.push_back(lookup(id.get<std::string>()));
    for (const auto& id : r.at("negatives")) neg.push_back(lookup(id.get<std::string>()));
    for (const auto& q : r.at("questions")) jobs.push_back({r.at("cluster").get<int>(), q.get<std::string>(), pos, neg});
  }

  std::shared_ptr<const GenerationProvider> owned;
  const auto& llm = resolve(provider, config, owned);
  const auto candidates_hash = file_digest(a.candidates);
  std::vector<ProbeCounts> counts(jobs.size());
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    counts[i] = probe_answers(jobs[i].question, jobs[i].pos, jobs[i].neg, llm, 1);
  });

  std::string out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& c = counts[i];
    ordered_json line;
    line["cluster"] = jobs[i].cluster;
    line["text"] = jobs[i].question;
    line["yes_pos"] = c.yes_pos;
    line["no_pos"] = c.no_pos;
    line["yes_neg"] = c.yes_neg;
    line["no_neg"] = c.no_neg;
    line["discarded"] = c.discarded;
    if (c.yes_pos + c.no_pos >= 1 && c.yes_neg + c.no_neg >= 1) {
      line["score"] = discrimination_score(c);
    } else {
      line["score"] = nullptr;
      log::warn("probe: question '" + jobs[i].question + "' has no usable answers on one side; it will be dropped");
    }
    line["candidates_sha256"] = candidates_hash;
    out += line.dump() + "\n";
  }
  write_file(a.probes, out);
  log::info("probe: scored " + std::to_string(jobs.size()) + " questions");
}

void stage_filter(const PipelineConfig& config, const TextEncoder* encoder) {
  const auto a = artifacts(config);
  require_input(a.probes, "filter");
  require_input(a.candidates, "filter");
  const auto model = load_model(config, "filter");
  const auto rows = read_jsonl(a.probes);
  const auto candidates_hash = file_digest(a.candidates);

  std::map<int, std::vector<Question>> by_cluster;
  std::vector<std::string> texts;
  std::vector<std::pair<int, std::size_t>> slot;
  for (const auto& r : rows) {
    if (r.at("candidates_sha256").get<std::string>() != candidates_hash) {
      throw FormatError("filter: probes were computed from different candidates; rerun probe");
    }
    if (r.at("score").is_null()) continue;
    Question q;
    q.text = r.at("text").get<std::string>();
    q.source_cluster = r.at("cluster").get<int>();
    q.score = r.at("score").get<double>();
    auto& list = by_cluster[q.source_cluster];
    q.id = static_cast<int>(list.size());
    slot.emplace_back(q.source_cluster, list.size());
    texts.push_back(q.text);
    list.push_back(std::move(q));
  }
  if (texts.empty()) throw InvalidArgument("filter: no scored questions to filter");

  std::shared_ptr<const TextEncoder> owned;
  const auto enc = resolve(encoder, config, owned);
  const auto vectors = enc->encode(texts);
  for (std::size_t i = 0; i < slot.size(); ++i) by_cluster[slot[i].first][slot[i].second].embedding = vectors[i];

  const auto sizes = model.cluster_sizes();
  const double mean = static_cast<double>(model.doc_ids().size()) / static_cast<double>(model.k());
  std::vector<std::vector<Question>> retained;
  for (const auto& [c, list] : by_cluster) {
    const int quota = adaptive_quota(sizes.at(static_cast<std::size_t>(c)), mean, config.filter.quota_base,
                                     config.filter.quota_lo, config.filter.quota_hi);
    retained.push_back(redundancy_filter(list, config.filter.theta, quota));
  }
  auto snapshot = config_snapshot(config);
  snapshot["probes_sha256"] = file_digest(a.probes);
  const QuestionBank bank = build_bank(retained, config.filter.theta, snapshot);
  save_bank(bank, a.bank, a.bank_vectors);
  log::info("filter: bank of " + std::to_string(bank.size()) + " questions from " + std::to_string(texts.size()) +
            " candidates, hash " + bank.bank_hash());
}

void stage_train_heads(const PipelineConfig& config) {
  const auto a = artifacts(config);
  const auto bank = load_run_bank(config, "train-heads");
  const auto model = load_model(config, "train-heads");
  require_input(config.paths.vectors, "train-heads");
  const auto corpus = load_matrix(config.paths.vectors, true);
  if (corpus.dim() != bank.encoder_dim()) {
    throw InvalidArgument("train-heads: vector dim " + std::to_string(corpus.dim()) + " does not match bank dim " +
                          std::to_string(bank.encoder_dim()));
  }
  std::vector<LinearHead> heads(static_cast<std::size_t>(bank.size()));
  parallel_for(heads.size(), config.workers, [&](std::size_t j) {
    const auto& q = bank.question(static_cast<int>(j));
    const auto data = build_classifier_dataset(q.source_cluster, model, config.classifier.counts,
                                               derive_seed(config.seed, "train-heads/" + std::to_string(j)));
    RowMatrix x(static_cast<Eigen::Index>(data.items.size()), corpus.dim());
    Eigen::VectorXd y(static_cast<Eigen::Index>(data.items.size()));
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = corpus.row(corpus.index_of(data.items[i].doc_id));
      y(static_cast<Eigen::Index>(i)) = data.items[i].label;
    }
    heads[j] = train_linear_head(x, y, config.classifier.train, static_cast<int>(j));
  });
  save_heads(heads, bank.bank_hash(), a.heads);
  log::info("train-heads: " + std::to_string(heads.size()) + " heads");
}

void stage_embed(const PipelineConfig& config) {
  const auto a = artifacts(config);
  const auto bank = load_run_bank(config, "embed");
  const auto heads = maybe_heads(config, bank, "embed");
  require_input(config.paths.vectors, "embed");
  const auto corpus = load_matrix(config.paths.vectors, true);
  std::vector<DocEmbedding> out(static_cast<std::size_t>(corpus.size()));
  parallel_for(out.size(), config.workers, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    out[i] = {corpus.ids()[i], embed_vector(corpus.row(row).transpose(), bank, config.embed, heads)};
  });
  save_embeddings(out, a.embeddings);
  log::info("embed: " + std::to_string(out.size()) + " documents with " + to_string(config.embed.method) +
            " k=" + std::to_string(config.embed.k));
}

std::string stage_eval(const PipelineConfig& config, const std::string& task, const TextEncoder* encoder) {
  if (task != "all" && task != "clustering" && task != "sts" && task != "retrieval") {
    throw InvalidArgument("eval: unknown task '" + task + "' (expected all, clustering, sts or retrieval)");
  }
  const auto a = artifacts(config);
  auto bank = std::make_shared<const QuestionBank>(load_run_bank(config, "eval"));
  auto heads = maybe_heads(config, *bank, "eval");
  std::shared_ptr<const TextEncoder> owned;
  const auto enc = resolve(encoder, config, owned);
  EmbedSettings settings = config.embed;
  settings.workers = config.workers;
  const QuestionBackend backend(enc, bank, settings, std::move(heads));
  const auto snapshot = config_snapshot(config);

  auto wanted = [&](const std::string& name, const std::filesystem::path& path) {
    if (task == name) {
      require_input(path, "eval " + name);
      return true;
    }
    if (task != "all") return false;
    if (path.empty() || !std::filesystem::exists(path)) {
      log::warn("eval: skipping " + name + " task, no dataset at '" + path.string() + "'");
      return false;
    }
    return true;
  };

  std::vector<EvalReport> reports;
  if (wanted("clustering", config.eval.clustering)) {
    const auto data = load_clustering_dataset(config.eval.clustering);
    const auto embs = backend.embed(data.texts);
    auto r = run_clustering_task(embs, data.labels, 0, derive_seed(config.seed, "eval/clustering"), bank->size());
    r.dataset = config.eval.clustering.filename().string();
    r.backend = backend.name();
    r.similarity = backend.similarity_name();
    r.config["pipeline"] = snapshot;
    reports.push_back(std::move(r));
  }
  if (wanted("sts", config.eval.sts)) {
    const auto data = load_sts_dataset(config.eval.sts);
    auto r = run_sts_task(data.pairs, data.scores, backend);
    r.dataset = config.eval.sts.filename().string();
    r.config["pipeline"] = snapshot;
    reports.push_back(std::move(r));
  }
  if (wanted("retrieval", config.eval.qrels)) {
    require_input(config.eval.queries, "eval retrieval");
    require_input(config.eval.retrieval_corpus, "eval retrieval");
    const auto queries = load_records(config.eval.queries);
    const auto corpus = load_records(config.eval.retrieval_corpus);
    const auto qrels = load_qrels(config.eval.qrels);
    auto r = run_retrieval_task(queries, corpus, qrels, backend, config.eval.ndcg_k, config.eval.gain, config.workers);
    r.dataset = config.eval.qrels.filename().string();
    r.config["pipeline"] = snapshot;
    reports.push_back(std::move(r));
  }
  if (reports.empty()) throw InvalidArgument("eval: no task had a dataset to run");
  std::filesystem::create_directories(config.paths.output_dir);
  write_file(a.report_json, report_to_json(reports).dump(2) + "\n");
  auto table = report_to_table(reports);
  write_file(a.report_text, table);
  return table;
}

std::string stage_explain(const PipelineConfig& config, const std::string& doc_id, int top_m) {
  const auto a = artifacts(config);
  require_input(a.embeddings, "explain");
  const auto bank = load_run_bank(config, "explain");
  for (const auto& e : load_embeddings(a.embeddings)) {
    if (e.doc_id != doc_id) continue;
    std::ostringstream out;
    out << "document " << doc_id << "\n" << format_explanation(explain(e.embedding, bank, top_m));
    return out.str();
  }
  throw InvalidArgument("explain: document '" + doc_id + "' is not in " + a.embeddings.string());
}

std::string run_all(const PipelineConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.paths.output_dir);
  const auto encoder = make_encoder(config);
  const auto provider = make_provider(config);
  stage_encode(config, encoder.get());
  stage_cluster(config);
  stage_signatures(config);
  stage_genq(config, provider.get());
  stage_probe(config, provider.get());
  stage_filter(config, encoder.get());
  if (config.embed.method == EmbedMethod::classifier) stage_train_heads(config);
  stage_embed(config);
  return stage_eval(config, "all", encoder.get());
}

}  // namespace qdim
