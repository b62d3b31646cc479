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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qdim/clustering.hpp"
#include "qdim/questions.hpp"

namespace qdim {

/// Active question ids of a binary embedding z in {0,1}^M.
struct SparseBinaryEmbedding {
  std::vector<int> active;  // strictly increasing
  std::string bank_hash;
  int k = 0;
  /// Construction-time score of each active id (aligned with `active`);
  /// empty when not recorded.
  std::vector<double> scores;

  bool operator==(const SparseBinaryEmbedding&) const = default;
};

struct ScoredDimension {
  int question_id = 0;
  double score = 0.0;
};

/// s_j = cosine(doc, h(q_j)) for every question, in id order.
std::vector<ScoredDimension> score_questions(const DenseVector& doc, const QuestionBank& bank);

/// Top min(k, M) ids by score, ties by lower id.
SparseBinaryEmbedding embed_topk(std::span<const ScoredDimension> scores, int k, std::string bank_hash = {});
SparseBinaryEmbedding embed_topk(const DenseVector& doc, const QuestionBank& bank, int k);

/// Greedy maximal marginal relevance: each step takes the unselected j
/// maximizing lambda * s_j - (1 - lambda) * max_{i selected} cos(q_j, q_i),
/// the first pick being argmax s_j; ties by lower id. The recorded score of a
/// dimension is its marginal value when selected.
SparseBinaryEmbedding embed_mmr(const DenseVector& doc, const QuestionBank& bank, int k, double lambda);

/// |A n B| / sqrt(|A| |B|).
double binary_similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b);
/// |A n B| / |A u B|.
double jaccard_similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b);

enum class SimilarityKind { cosine, jaccard };
double similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b, SimilarityKind kind);

// Classifier variant: per-question logistic heads over frozen dense vectors.

struct LinearHead {
  int question_id = 0;
  DenseVector weights;
  double bias = 0.0;
  int epochs = 0;
  double final_loss = 0.0;
  double lr = 0.0;
  double l2 = 0.0;
};

struct ClassifierCounts {
  int n_pos = 300;
  int n_hard = 500;
  int n_rand = 200;
  int n_hard_clusters = 3;
};

struct LabeledDoc {
  std::string doc_id;
  int label = 0;
};

struct ClassifierDataset {
  std::vector<LabeledDoc> items;
  /// Set when some pool was too small and sampling fell back to replacement.
  bool with_replacement = false;
};

/// Positives from the source cluster, hard negatives from its nearest
/// clusters, random negatives from the rest of the corpus.
ClassifierDataset build_classifier_dataset(int source_cluster, const ClusterModel& model, const ClassifierCounts& counts,
                                           std::uint64_t seed);

struct TrainOptions {
  double lr = 0.5;
  int epochs = 200;
  double l2 = 1e-4;
};

/// Mean binary cross-entropy plus (l2 / 2) * |w|^2 (bias unregularized).
double logistic_loss(const RowMatrix& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b, double l2);

/// Analytic gradient of logistic_loss; the last entry is d/db.
Eigen::VectorXd logistic_gradient(const RowMatrix& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                                  double l2);

/// Full-batch gradient descent from zero. A step that would raise the loss is
/// rejected and the learning rate halved, so the loss never increases.
LinearHead train_linear_head(const RowMatrix& x, const Eigen::VectorXd& y, const TrainOptions& options,
                             int question_id = 0, std::vector<double>* loss_history = nullptr);

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// z_j = 1 iff sigmoid(w_j . x + b_j) >= tau; k records the active count.
SparseBinaryEmbedding embed_classifier(const DenseVector& doc, std::span<const LinearHead> heads, double tau,
                                       std::string bank_hash = {});

struct ExplainedDimension {
  int question_id = 0;
  std::string text;
  double score = 0.0;
};

/// Top `top_m` active dimensions by construction-time score (ties by lower id).
std::vector<ExplainedDimension> explain(const SparseBinaryEmbedding& embedding, const QuestionBank& bank, int top_m);

/// "score  question" rows, score with three decimals.
std::string format_explanation(std::span<const ExplainedDimension> rows);

struct DocEmbedding {
  std::string doc_id;
  SparseBinaryEmbedding embedding;
};

/// JSONL per document: doc_id, bank_hash, k, active, scores (optional).
void save_embeddings(std::span<const DocEmbedding> embeddings, const std::filesystem::path& path,
                     bool with_scores = true);
std::vector<DocEmbedding> load_embeddings(const std::filesystem::path& path);

/// JSON array of {question_id, weights, bias, metadata}.
void save_heads(std::span<const LinearHead> heads, const std::string& bank_hash, const std::filesystem::path& path);
std::vector<LinearHead> load_heads(const std::filesystem::path& path, const std::string& expected_bank_hash);

}  // namespace qdim
