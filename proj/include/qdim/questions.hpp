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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qdim/clustering.hpp"
#include "qdim/ontology.hpp"
#include "qdim/provider.hpp"
#include "qdim/vectors.hpp"

namespace qdim {

inline constexpr std::size_t kMaxQuestionLength = 300;

struct Question {
  int id = 0;
  std::string text;
  int source_cluster = 0;
  /// Discrimination score in [-1, 1].
  double score = 0.0;
  DenseVector embedding;
};

/// Throws InvalidArgument unless the text is a non-empty question of at most
/// kMaxQuestionLength characters ending in '?'.
void validate_question_text(std::string_view text);

struct ProbeCounts {
  int yes_pos = 0;
  int no_pos = 0;
  int yes_neg = 0;
  int no_neg = 0;
  /// Responses that normalized to neither yes nor no.
  int discarded = 0;

  bool operator==(const ProbeCounts&) const = default;
};

/// Provider failure during probing; carries the counts gathered so far.
class ProbeError : public ProviderError {
public:
  ProbeError(const std::string& what, ProbeCounts partial) : ProviderError(what), partial_(partial) {}
  const ProbeCounts& partial() const { return partial_; }

private:
  ProbeCounts partial_;
};

/// Global ordered question set. Ids are positions; embeddings share one
/// dimension; normalized texts are unique. Immutable after construction.
class QuestionBank {
public:
  QuestionBank() = default;
  explicit QuestionBank(std::vector<Question> questions, nlohmann::ordered_json config = nlohmann::ordered_json::object());

  int size() const { return static_cast<int>(questions_.size()); }
  Eigen::Index encoder_dim() const { return unit_.cols(); }
  const std::string& bank_hash() const { return hash_; }
  const std::vector<Question>& questions() const { return questions_; }
  const Question& question(int id) const { return questions_.at(static_cast<std::size_t>(id)); }
  /// M x d, each row the unit-normalized question embedding.
  const RowMatrix& unit_embeddings() const { return unit_; }
  const nlohmann::ordered_json& config() const { return config_; }
  /// Question-question cosine matrix, precomputed for banks of at most
  /// kGramLimit questions; null for larger banks.
  const RowMatrix* gram() const { return gram_.get(); }

  static constexpr int kGramLimit = 2048;

private:
  std::vector<Question> questions_;
  RowMatrix unit_;
  std::shared_ptr<const RowMatrix> gram_;
  std::string hash_;
  nlohmann::ordered_json config_;
};

/// Digest over the ordered normalized question texts.
std::string compute_bank_hash(std::span<const Question> questions);

/// Bank JSON (header + per-question records) and a companion vector-matrix
/// file of question embeddings keyed by question id.
void save_bank(const QuestionBank& bank, const std::filesystem::path& json_path,
               const std::filesystem::path& vectors_path);
QuestionBank load_bank(const std::filesystem::path& json_path, const std::filesystem::path& vectors_path);

/// id -> document text.
using TextLookup = std::unordered_map<std::string, std::string>;

/// JSONL with "id" (or "doc_id") and "text" per line.
TextLookup load_texts(const std::filesystem::path& path, std::vector<std::string>* order = nullptr);

/// Built-in generation prompt. Placeholders: {n_questions}, {positives},
/// {negatives} (numbered "Positive i." / "Negative i." lines) and {context}
/// (the "UMLS Context:" section, or nothing for an empty signature).
const std::string& default_prompt_template();

/// Contrastive generation prompt with numbered positive and negative articles
/// (hard then easy) and the concept context. `prompt_template` overrides the
/// built-in text and must contain the same placeholders.
std::string assemble_prompt(const ContrastiveSample& sample, const TextLookup& docs, const ConceptSignature& signature,
                            int n_questions = 10, const std::string& prompt_template = default_prompt_template());

/// Lines of the form "<number>. <text>" ending in '?', numbering stripped,
/// exact repeats dropped, order kept.
std::vector<std::string> parse_questions(std::string_view llm_output);

std::string probe_prompt(std::string_view question, std::string_view document);

/// true for yes, false for no, nullopt when the response is neither. Leading
/// markup and punctuation are stripped; matching is case-insensitive on a
/// whole-word prefix.
std::optional<bool> normalize_answer(std::string_view response);

/// Asks the provider once per (question, document). Throws ProbeError after a
/// provider failure.
ProbeCounts probe_answers(std::string_view question, std::span<const std::string> positive_texts,
                          std::span<const std::string> negative_texts, const GenerationProvider& provider,
                          std::size_t workers = 1);

/// yes_pos/(yes_pos+no_pos) - yes_neg/(yes_neg+no_neg).
double discrimination_score(const ProbeCounts& counts);

/// Greedy pass in descending score order (ties by lower candidate index):
/// keep a candidate iff its cosine to every kept question is below theta,
/// stopping after `quota` questions. Output keeps the greedy order.
std::vector<Question> redundancy_filter(std::span<const Question> candidates, double theta, int quota);

/// clamp(ceil(base * cluster_size / mean_cluster_size), lo, hi).
int adaptive_quota(std::size_t cluster_size, double mean_cluster_size, int base, int lo, int hi);

/// Concatenates per-cluster retained questions in cluster order and removes
/// cross-cluster duplicates (same normalized text, or embedding cosine >= theta),
/// keeping the higher score; survivors get contiguous ids in concatenation order.
QuestionBank build_bank(std::span<const std::vector<Question>> per_cluster, double theta,
                        nlohmann::ordered_json config = nlohmann::ordered_json::object());

}  // namespace qdim
