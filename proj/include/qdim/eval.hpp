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

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qdim/embedding.hpp"

namespace qdim {

// Metrics.

struct VMeasure {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v = 0.0;
};

/// Entropy-based clustering agreement (natural log). h = 1 when the gold
/// labels have zero entropy, c = 1 when the predicted labels do, v = 0 when
/// h + c = 0.
VMeasure v_measure(std::span<const int> gold, std::span<const int> pred);

/// 1-based ranks; tied values get the mean of their rank span.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws on a constant input.
double spearman(std::span<const double> x, std::span<const double> y);

enum class Gain { linear, exponential };

/// Grade per doc id for one query.
using QrelRow = std::map<std::string, int>;
/// query id -> graded judgments.
using Qrels = std::map<std::string, QrelRow>;

/// DCG@k over the ranking normalized by the ideal DCG of the row's grades;
/// 0 when the row has no positive grade. Throws on duplicate ids.
double ndcg_at_k(std::span<const std::string> ranked, const QrelRow& grades, int k = 10, Gain gain = Gain::linear);

// Datasets.

struct ClusteringDataset {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<int> labels;
  std::vector<std::string> label_names;  // index = label
};

struct StsDataset {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<double> scores;
};

struct TextRecord {
  std::string id;
  std::string text;
};

/// JSONL lines {doc_id, text, label}; labels may be strings or integers.
ClusteringDataset load_clustering_dataset(const std::filesystem::path& path);
/// JSONL lines {text_a, text_b, score}.
StsDataset load_sts_dataset(const std::filesystem::path& path);
/// JSONL lines {id|doc_id|query_id|_id, text}.
std::vector<TextRecord> load_records(const std::filesystem::path& path);
/// TSV query_id, doc_id, grade. A first line whose grade is not an integer is
/// treated as a header.
Qrels load_qrels(const std::filesystem::path& path);

// Backends and tasks.

/// Anything that maps texts to sparse binary embeddings and compares them.
class EmbeddingBackend {
public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<SparseBinaryEmbedding> embed(std::span<const std::string> texts) const = 0;
  virtual double similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) const {
    return binary_similarity(a, b);
  }
  virtual std::string similarity_name() const { return "binary-cosine"; }
};

enum class EmbedMethod { tf, tf_mmr, classifier };
std::string to_string(EmbedMethod method);
EmbedMethod parse_embed_method(const std::string& name);

struct EmbedSettings {
  EmbedMethod method = EmbedMethod::tf_mmr;
  int k = 256;
  double lambda = 0.7;
  double tau = 0.5;
  SimilarityKind similarity = SimilarityKind::cosine;
  std::size_t workers = 1;
};

/// Embeds one dense vector with the configured method.
SparseBinaryEmbedding embed_vector(const DenseVector& doc, const QuestionBank& bank, const EmbedSettings& settings,
                                   std::span<const LinearHead> heads = {});

/// Encoder + question bank backend.
class QuestionBackend : public EmbeddingBackend {
public:
  QuestionBackend(std::shared_ptr<const TextEncoder> encoder, std::shared_ptr<const QuestionBank> bank,
                  EmbedSettings settings, std::vector<LinearHead> heads = {});
  std::string name() const override;
  std::vector<SparseBinaryEmbedding> embed(std::span<const std::string> texts) const override;
  double similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) const override;
  std::string similarity_name() const override;

private:
  std::shared_ptr<const TextEncoder> encoder_;
  std::shared_ptr<const QuestionBank> bank_;
  EmbedSettings settings_;
  std::vector<LinearHead> heads_;
};

struct EvalReport {
  std::string task;
  std::string dataset;
  std::string backend;
  std::string similarity;
  std::vector<std::pair<std::string, double>> metrics;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  double metric(const std::string& name) const;
};

/// Clusters the binary vectors with k-means (K = number of gold classes when
/// k == 0), keeping the lowest-inertia of five seeded restarts, and reports
/// homogeneity, completeness and V-measure.
EvalReport run_clustering_task(std::span<const SparseBinaryEmbedding> embeddings, std::span<const int> gold, int k,
                               std::uint64_t seed, int bank_size = 0);

/// Spearman correlation between backend pair similarity and gold scores.
EvalReport run_sts_task(std::span<const std::pair<std::string, std::string>> pairs, std::span<const double> gold,
                        const EmbeddingBackend& backend);

/// Ranks every corpus document per query by backend similarity (ties by doc
/// id) and reports mean nDCG@k over all queries.
EvalReport run_retrieval_task(std::span<const TextRecord> queries, std::span<const TextRecord> corpus,
                              const Qrels& qrels, const EmbeddingBackend& backend, int k = 10,
                              Gain gain = Gain::linear, std::size_t workers = 1);

nlohmann::ordered_json report_to_json(std::span<const EvalReport> reports);
/// Aligned-column plain-text table, one row per (report, metric).
std::string report_to_table(std::span<const EvalReport> reports);

}  // namespace qdim
