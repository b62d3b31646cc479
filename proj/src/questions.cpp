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

#include "qdim/questions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "qdim/util.hpp"

namespace qdim {

void validate_question_text(std::string_view text) {
  const auto t = trim(text);
  if (t.empty()) throw InvalidArgument("empty question text");
  if (t.size() > kMaxQuestionLength) {
    throw InvalidArgument("question longer than " + std::to_string(kMaxQuestionLength) + " characters");
  }
  if (t.back() != '?') throw InvalidArgument("question does not end with '?': " + t);
}

std::string compute_bank_hash(std::span<const Question> questions) {
  std::string joined;
  for (const auto& q : questions) {
    joined += normalize_text(q.text);
    joined += '\n';
  }
  return sha256_hex(joined);
}

QuestionBank::QuestionBank(std::vector<Question> questions, nlohmann::ordered_json config)
    : questions_(std::move(questions)), config_(std::move(config)) {
  if (questions_.empty()) throw InvalidArgument("question bank is empty");
  const Eigen::Index d = questions_.front().embedding.size();
  if (d <= 0) throw InvalidArgument("question embeddings must be non-empty");
  unit_.resize(static_cast<Eigen::Index>(questions_.size()), d);
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    const auto& q = questions_[i];
    if (q.id != static_cast<int>(i)) {
      throw InvalidArgument("question ids must be contiguous from 0; position " + std::to_string(i) + " has id " +
                            std::to_string(q.id));
    }
    validate_question_text(q.text);
    if (!(q.score >= -1.0 && q.score <= 1.0)) throw InvalidArgument("question " + std::to_string(i) + " score outside [-1, 1]");
    if (q.embedding.size() != d) {
      throw InvalidArgument("question " + std::to_string(i) + " embedding dimension " +
                            std::to_string(q.embedding.size()) + ", expected " + std::to_string(d));
    }
    require_finite(q.embedding, "question embedding");
    if (!seen.insert(normalize_text(q.text)).second) throw InvalidArgument("duplicate question text: " + q.text);
    unit_.row(static_cast<Eigen::Index>(i)) = l2_normalize(q.embedding).transpose();
  }
  hash_ = compute_bank_hash(questions_);
  if (size() <= kGramLimit) gram_ = std::make_shared<const RowMatrix>(unit_ * unit_.transpose());
}

void save_bank(const QuestionBank& bank, const std::filesystem::path& json_path,
               const std::filesystem::path& vectors_path) {
  nlohmann::ordered_json doc;
  doc["format"] = "qdim-question-bank";
  doc["version"] = 1;
  doc["encoder_dim"] = bank.encoder_dim();
  doc["bank_hash"] = bank.bank_hash();
  doc["config"] = bank.config();
  auto records = nlohmann::ordered_json::array();
  std::vector<std::string> ids;
  std::vector<DenseVector> rows;
  for (const auto& q : bank.questions()) {
    nlohmann::ordered_json r;
    r["id"] = q.id;
    r["text"] = q.text;
    r["source_cluster"] = q.source_cluster;
    r["score"] = q.score;
    records.push_back(std::move(r));
    ids.push_back(std::to_string(q.id));
    rows.push_back(q.embedding);
  }
  doc["questions"] = std::move(records);
  write_file(json_path, doc.dump(2) + "\n");
  save_matrix(VectorMatrix::from_rows(std::move(ids), rows, bank.encoder_dim()), vectors_path);
}

QuestionBank load_bank(const std::filesystem::path& json_path, const std::filesystem::path& vectors_path) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  const auto vectors = load_matrix(vectors_path);
  try {
    const auto dim = doc.at("encoder_dim").get<Eigen::Index>();
    if (dim != vectors.dim()) {
      throw FormatError("bank declares encoder_dim " + std::to_string(dim) + " but vectors have " +
                        std::to_string(vectors.dim()));
    }
    std::vector<Question> questions;
    for (const auto& r : doc.at("questions")) {
      Question q;
      q.id = r.at("id").get<int>();
      q.text = r.at("text").get<std::string>();
      q.source_cluster = r.at("source_cluster").get<int>();
      q.score = r.at("score").get<double>();
      q.embedding = vectors.row(vectors.index_of(std::to_string(q.id))).transpose();
      questions.push_back(std::move(q));
    }
    QuestionBank bank(std::move(questions), doc.value("config", nlohmann::ordered_json::object()));
    if (bank.bank_hash() != doc.at("bank_hash").get<std::string>()) {
      throw FormatError("bank_hash in '" + json_path.string() + "' does not match its questions");
    }
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
}

TextLookup load_texts(const std::filesystem::path& path, std::vector<std::string>* order) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  TextLookup out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      const auto id = obj.contains("id") ? obj.at("id").get<std::string>() : obj.at("doc_id").get<std::string>();
      if (!out.emplace(id, obj.at("text").get<std::string>()).second) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": duplicate id '" + id + "'");
      }
      if (order) order->push_back(id);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string single_line(std::string_view text) {
  std::string out(text);
  std::replace_if(out.begin(), out.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');
  return trim(out);
}

const std::string& doc_text(const TextLookup& docs, const std::string& id) {
  auto it = docs.find(id);
  if (it == docs.end()) throw InvalidArgument("no text for document '" + id + "'");
  return it->second;
}

}  // namespace

const std::string& default_prompt_template() {
  static const std::string text =
      "You are a biomedical NLP specialist who writes yes/no questions. Generate {n_questions} short yes/no "
      "questions about properties of an article. Every question should be answered \"yes\" for each positive "
      "article and \"no\" for each negative article. Ask about biomedical content such as conditions and "
      "their signs, exposures, therapies and medications, or the genes and compounds involved.\n\n"
      "Constraints:\n"
      "- Do not ask about the article itself (its study design, whether it describes methods, and so on).\n"
      "- Output only the numbered questions, without explanation.\n"
      "- Use a numbered list:\n"
      "1. [first yes/no question]\n"
      "2. [second yes/no question]\n\n"
      "Positive Articles:\n"
      "{positives}\n"
      "Negative Articles:\n"
      "{negatives}{context}";
  return text;
}

std::string assemble_prompt(const ContrastiveSample& sample, const TextLookup& docs, const ConceptSignature& signature,
                            int n_questions, const std::string& prompt_template) {
  if (n_questions < 1) throw InvalidArgument("n_questions must be at least 1");
  std::ostringstream pos;
  int i = 0;
  for (const auto& id : sample.positives) pos << "Positive " << ++i << ". " << single_line(doc_text(docs, id)) << "\n";
  std::ostringstream neg;
  i = 0;
  for (const auto& id : sample.negatives()) neg << "Negative " << ++i << ". " << single_line(doc_text(docs, id)) << "\n";
  const auto rendered = render_signature(signature);
  const std::string context = rendered.empty() ? "" : "\nUMLS Context:\n" + rendered + "\n";

  const std::pair<std::string_view, std::string> fills[] = {
      {"{n_questions}", std::to_string(n_questions)},
      {"{positives}", pos.str()},
      {"{negatives}", neg.str()},
      {"{context}", context}};
  std::string out;
  std::size_t at = 0;
  while (at < prompt_template.size()) {
    bool replaced = false;
    for (const auto& [key, value] : fills) {
      if (prompt_template.compare(at, key.size(), key) == 0) {
        out += value;
        at += key.size();
        replaced = true;
        break;
      }
    }
    if (!replaced) out += prompt_template[at++];
  }
  return out;
}

std::vector<std::string> parse_questions(std::string_view llm_output) {
  static const std::regex numbered(R"(^\s*\d+\s*[.)]\s+(.*\S)\s*$)");
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::istringstream lines{std::string(llm_output)};
  std::string line;
  std::smatch m;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!std::regex_match(line, m, numbered)) continue;
    auto text = trim(m[1].str());
    if (text.empty() || text.back() != '?' || text.size() > kMaxQuestionLength) continue;
    if (seen.insert(text).second) out.push_back(std::move(text));
  }
  return out;
}

std::string probe_prompt(std::string_view question, std::string_view document) {
  return "Answer strictly yes or no. Question: " + std::string(question) + " Text: " + single_line(document);
}

std::optional<bool> normalize_answer(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size()) {
    const auto c = static_cast<unsigned char>(response[i]);
    if (std::isalnum(c)) break;
    ++i;
  }
  const auto rest = to_lower(response.substr(i));
  auto word = [&](std::string_view w) {
    return rest.rfind(w, 0) == 0 &&
           (rest.size() == w.size() || !std::isalnum(static_cast<unsigned char>(rest[w.size()])));
  };
  if (word("yes")) return true;
  if (word("no")) return false;
  return std::nullopt;
}

ProbeCounts probe_answers(std::string_view question, std::span<const std::string> positive_texts,
                          std::span<const std::string> negative_texts, const GenerationProvider& provider,
                          std::size_t workers) {
  if (positive_texts.empty() || negative_texts.empty()) {
    throw InvalidArgument("probe_answers needs at least one positive and one negative document");
  }
  const std::size_t n = positive_texts.size() + negative_texts.size();
  std::vector<std::optional<bool>> answers(n);
  std::vector<std::string> failures(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& text = i < positive_texts.size() ? positive_texts[i] : negative_texts[i - positive_texts.size()];
    try {
      answers[i] = normalize_answer(provider.complete(probe_prompt(question, text)));
    } catch (const std::exception& e) {
      failures[i] = e.what();
      if (failures[i].empty()) failures[i] = "provider failure";
    }
  });
  ProbeCounts c;
  std::string first_failure;
  for (std::size_t i = 0; i < n; ++i) {
    if (!failures[i].empty()) {
      if (first_failure.empty()) first_failure = failures[i];
      continue;
    }
    const bool positive = i < positive_texts.size();
    if (!answers[i]) {
      ++c.discarded;
    } else if (*answers[i]) {
      ++(positive ? c.yes_pos : c.yes_neg);
    } else {
      ++(positive ? c.no_pos : c.no_neg);
    }
  }
  if (!first_failure.empty()) throw ProbeError("probing failed: " + first_failure, c);
  return c;
}

double discrimination_score(const ProbeCounts& c) {
  if (c.yes_pos < 0 || c.no_pos < 0 || c.yes_neg < 0 || c.no_neg < 0) {
    throw InvalidArgument("probe counts must be non-negative");
  }
  const int pos = c.yes_pos + c.no_pos;
  const int neg = c.yes_neg + c.no_neg;
  if (pos < 1) throw InvalidArgument("discrimination_score: no positive answers");
  if (neg < 1) throw InvalidArgument("discrimination_score: no negative answers");
  return static_cast<double>(c.yes_pos) / pos - static_cast<double>(c.yes_neg) / neg;
}

namespace {

std::vector<std::size_t> by_score_desc(std::span<const Question> qs) {
  std::vector<std::size_t> order(qs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return qs[a].score > qs[b].score; });
  return order;
}

bool too_similar(const Question& q, std::span<const Question* const> kept, double theta) {
  return std::any_of(kept.begin(), kept.end(), [&](const Question* k) { return cosine(q.embedding, k->embedding) >= theta; });
}

}  // namespace

std::vector<Question> redundancy_filter(std::span<const Question> candidates, double theta, int quota) {
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgument("redundancy_filter: theta must lie in (0, 1]");
  if (quota < 0) throw InvalidArgument("redundancy_filter: quota must be non-negative");
  std::vector<const Question*> kept;
  for (std::size_t i : by_score_desc(candidates)) {
    if (static_cast<int>(kept.size()) >= quota) break;
    if (!too_similar(candidates[i], kept, theta)) kept.push_back(&candidates[i]);
  }
  std::vector<Question> out;
  for (const auto* q : kept) out.push_back(*q);
  return out;
}

int adaptive_quota(std::size_t cluster_size, double mean_cluster_size, int base, int lo, int hi) {
  if (!(mean_cluster_size > 0.0)) throw InvalidArgument("adaptive_quota: mean cluster size must be positive");
  if (lo > hi) throw InvalidArgument("adaptive_quota: lo exceeds hi");
  const double raw = std::ceil(static_cast<double>(base) * static_cast<double>(cluster_size) / mean_cluster_size);
  const double clamped = std::clamp(raw, static_cast<double>(lo), static_cast<double>(hi));
  return static_cast<int>(clamped);
}

QuestionBank build_bank(std::span<const std::vector<Question>> per_cluster, double theta, nlohmann::ordered_json config) {
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgument("build_bank: theta must lie in (0, 1]");
  std::vector<Question> all;
  for (const auto& cluster : per_cluster) all.insert(all.end(), cluster.begin(), cluster.end());
  if (all.empty()) throw InvalidArgument("build_bank: no questions retained in any cluster");

  std::vector<const Question*> kept;
  std::vector<std::size_t> kept_index;
  std::unordered_set<std::string> texts;
  for (std::size_t i : by_score_desc(all)) {
    const auto norm = normalize_text(all[i].text);
    if (texts.count(norm) || too_similar(all[i], kept, theta)) continue;
    texts.insert(norm);
    kept.push_back(&all[i]);
    kept_index.push_back(i);
  }
  std::sort(kept_index.begin(), kept_index.end());
  std::vector<Question> out;
  for (std::size_t i : kept_index) {
    Question q = all[i];
    q.id = static_cast<int>(out.size());
    out.push_back(std::move(q));
  }
  return QuestionBank(std::move(out), std::move(config));
}

}  // namespace qdim
