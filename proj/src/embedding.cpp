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

#include "qdim/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qdim/util.hpp"

namespace qdim {

namespace {

void check_k(int k) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
}

/// Sorts active ids ascending, carrying scores along.
SparseBinaryEmbedding finalize(std::vector<std::pair<int, double>> picked, std::string bank_hash, int k) {
  std::sort(picked.begin(), picked.end());
  SparseBinaryEmbedding e;
  e.bank_hash = std::move(bank_hash);
  e.k = k;
  for (const auto& [id, score] : picked) {
    e.active.push_back(id);
    e.scores.push_back(score);
  }
  return e;
}

std::size_t intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

void check_comparable(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) {
  if (a.bank_hash != b.bank_hash) throw InvalidArgument("embeddings are bound to different question banks");
  if (a.active.empty() || b.active.empty()) throw InvalidArgument("cannot compare an embedding with no active dimensions");
}

}  // namespace

std::vector<ScoredDimension> score_questions(const DenseVector& doc, const QuestionBank& bank) {
  if (doc.size() != bank.encoder_dim()) {
    throw InvalidArgument("document dimension " + std::to_string(doc.size()) + " does not match bank encoder_dim " +
                          std::to_string(bank.encoder_dim()));
  }
  const DenseVector unit = l2_normalize(doc);
  const Eigen::VectorXd s = bank.unit_embeddings() * unit;
  std::vector<ScoredDimension> out(static_cast<std::size_t>(bank.size()));
  for (int j = 0; j < bank.size(); ++j) out[static_cast<std::size_t>(j)] = {j, std::clamp(s(j), -1.0, 1.0)};
  return out;
}

SparseBinaryEmbedding embed_topk(std::span<const ScoredDimension> scores, int k, std::string bank_hash) {
  check_k(k);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto take = std::min(static_cast<std::size_t>(k), scores.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a].score > scores[b].score ||
                             (scores[a].score == scores[b].score && scores[a].question_id < scores[b].question_id);
                    });
  std::vector<std::pair<int, double>> picked;
  for (std::size_t i = 0; i < take; ++i) picked.emplace_back(scores[order[i]].question_id, scores[order[i]].score);
  return finalize(std::move(picked), std::move(bank_hash), k);
}

SparseBinaryEmbedding embed_topk(const DenseVector& doc, const QuestionBank& bank, int k) {
  return embed_topk(score_questions(doc, bank), k, bank.bank_hash());
}

SparseBinaryEmbedding embed_mmr(const DenseVector& doc, const QuestionBank& bank, int k, double lambda) {
  check_k(k);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("MMR lambda must lie in [0, 1]");
  const auto scores = score_questions(doc, bank);
  const int m = bank.size();
  const int take = std::min(k, m);
  const RowMatrix* gram = bank.gram();
  const RowMatrix& unit = bank.unit_embeddings();

  std::vector<bool> selected(static_cast<std::size_t>(m), false);
  std::vector<double> max_sim(static_cast<std::size_t>(m), -std::numeric_limits<double>::infinity());
  std::vector<std::pair<int, double>> picked;
  Eigen::VectorXd row;
  for (int step = 0; step < take; ++step) {
    int best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      if (selected[static_cast<std::size_t>(j)]) continue;
      const double s = scores[static_cast<std::size_t>(j)].score;
      const double value = step == 0 ? s : lambda * s - (1.0 - lambda) * max_sim[static_cast<std::size_t>(j)];
      if (value > best_value) {
        best_value = value;
        best = j;
      }
    }
    if (step == 0) best_value = lambda * best_value;
    selected[static_cast<std::size_t>(best)] = true;
    picked.emplace_back(best, best_value);
    if (gram) {
      for (int j = 0; j < m; ++j) max_sim[static_cast<std::size_t>(j)] = std::max(max_sim[static_cast<std::size_t>(j)], (*gram)(j, best));
    } else {
      row = unit * unit.row(best).transpose();
      for (int j = 0; j < m; ++j) max_sim[static_cast<std::size_t>(j)] = std::max(max_sim[static_cast<std::size_t>(j)], row(j));
    }
  }
  return finalize(std::move(picked), bank.bank_hash(), k);
}

double binary_similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) {
  check_comparable(a, b);
  const double inter = static_cast<double>(intersection_size(a.active, b.active));
  return inter / std::sqrt(static_cast<double>(a.active.size()) * static_cast<double>(b.active.size()));
}

double jaccard_similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) {
  check_comparable(a, b);
  const auto inter = intersection_size(a.active, b.active);
  return static_cast<double>(inter) / static_cast<double>(a.active.size() + b.active.size() - inter);
}

double similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b, SimilarityKind kind) {
  return kind == SimilarityKind::cosine ? binary_similarity(a, b) : jaccard_similarity(a, b);
}

ClassifierDataset build_classifier_dataset(int source_cluster, const ClusterModel& model, const ClassifierCounts& counts,
                                           std::uint64_t seed) {
  model.check_cluster(source_cluster);
  if (counts.n_pos < 0 || counts.n_hard < 0 || counts.n_rand < 0) {
    throw InvalidArgument("classifier dataset counts must be non-negative");
  }
  const auto positives = model.members(source_cluster);
  const int n_near = std::min(counts.n_hard_clusters, model.k() - 1);
  const auto near = nearest_clusters(model, source_cluster, std::max(n_near, 0));
  std::vector<bool> is_near(static_cast<std::size_t>(model.k()), false);
  for (int c : near) is_near[static_cast<std::size_t>(c)] = true;
  std::vector<std::string> hard_pool;
  std::vector<std::string> rand_pool;
  for (std::size_t i = 0; i < model.doc_ids().size(); ++i) {
    const int c = model.assignments()[i];
    if (c == source_cluster) continue;
    (is_near[static_cast<std::size_t>(c)] ? hard_pool : rand_pool).push_back(model.doc_ids()[i]);
  }
  if (rand_pool.empty()) rand_pool = hard_pool;
  if (counts.n_pos > 0 && positives.empty()) throw InvalidArgument("source cluster is empty");
  if ((counts.n_hard > 0 || counts.n_rand > 0) && hard_pool.empty() && rand_pool.empty()) {
    throw InvalidArgument("no documents outside the source cluster to use as negatives");
  }

  Rng rng(seed);
  ClassifierDataset ds;
  auto draw = [&](const std::vector<std::string>& pool, int n, int label) {
    if (n == 0) return;
    const auto& src = pool.empty() ? rand_pool : pool;
    if (static_cast<int>(src.size()) >= n) {
      for (auto& id : rng.sample<std::string>(src, static_cast<std::size_t>(n))) ds.items.push_back({std::move(id), label});
    } else {
      ds.with_replacement = true;
      for (int i = 0; i < n; ++i) ds.items.push_back({src[rng.uniform_index(src.size())], label});
    }
  };
  draw(positives, counts.n_pos, 1);
  draw(hard_pool, counts.n_hard, 0);
  draw(rand_pool, counts.n_rand, 0);
  return ds;
}

namespace {

void check_training_data(const RowMatrix& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw InvalidArgument("training data: row count does not match label count");
  if (x.rows() == 0) throw InvalidArgument("training data is empty");
  bool has0 = false;
  bool has1 = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == 0.0) {
      has0 = true;
    } else if (y(i) == 1.0) {
      has1 = true;
    } else {
      throw InvalidArgument("labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) throw InvalidArgument("training data contains a single class");
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double logistic_loss(const RowMatrix& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b, double l2) {
  const Eigen::VectorXd z = (x * w).array() + b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z(i)) - y(i) * z(i);
  return total / static_cast<double>(z.size()) + 0.5 * l2 * w.squaredNorm();
}

Eigen::VectorXd logistic_gradient(const RowMatrix& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                                  double l2) {
  const Eigen::VectorXd z = (x * w).array() + b;
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) residual(i) = sigmoid(z(i)) - y(i);
  const double n = static_cast<double>(z.size());
  Eigen::VectorXd g(w.size() + 1);
  g.head(w.size()) = x.transpose() * residual / n + l2 * w;
  g(w.size()) = residual.sum() / n;
  return g;
}

LinearHead train_linear_head(const RowMatrix& x, const Eigen::VectorXd& y, const TrainOptions& options, int question_id,
                             std::vector<double>* loss_history) {
  check_training_data(x, y);
  if (!(options.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (options.epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (!(options.l2 >= 0.0)) throw InvalidArgument("l2 must be non-negative");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  double lr = options.lr;
  double loss = logistic_loss(x, y, w, b, options.l2);
  if (loss_history) loss_history->assign(1, loss);
  int epoch = 0;
  for (; epoch < options.epochs; ++epoch) {
    const Eigen::VectorXd g = logistic_gradient(x, y, w, b, options.l2);
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      Eigen::VectorXd w_next = w - lr * g.head(w.size());
      const double b_next = b - lr * g(w.size());
      const double next = logistic_loss(x, y, w_next, b_next, options.l2);
      if (next <= loss) {
        w = std::move(w_next);
        b = b_next;
        loss = next;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;
    if (loss_history) loss_history->push_back(loss);
  }
  if (!std::isfinite(loss)) throw Error("logistic head training diverged");
  return LinearHead{question_id, std::move(w), b, epoch, loss, options.lr, options.l2};
}

SparseBinaryEmbedding embed_classifier(const DenseVector& doc, std::span<const LinearHead> heads, double tau,
                                       std::string bank_hash) {
  std::vector<std::pair<int, double>> picked;
  for (const auto& h : heads) {
    if (h.weights.size() != doc.size()) {
      throw InvalidArgument("head " + std::to_string(h.question_id) + " has dimension " +
                            std::to_string(h.weights.size()) + ", document has " + std::to_string(doc.size()));
    }
    const double p = sigmoid(h.weights.dot(doc) + h.bias);
    if (p >= tau) picked.emplace_back(h.question_id, p);
  }
  const int active = static_cast<int>(picked.size());
  return finalize(std::move(picked), std::move(bank_hash), active);
}

std::vector<ExplainedDimension> explain(const SparseBinaryEmbedding& embedding, const QuestionBank& bank, int top_m) {
  if (embedding.bank_hash != bank.bank_hash()) throw InvalidArgument("embedding is not bound to this question bank");
  if (embedding.scores.size() != embedding.active.size()) {
    throw InvalidArgument("embedding carries no construction-time scores");
  }
  std::vector<std::size_t> order(embedding.active.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return embedding.scores[a] > embedding.scores[b]; });
  std::vector<ExplainedDimension> out;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < top_m; ++i) {
    const int id = embedding.active[order[i]];
    if (id < 0 || id >= bank.size()) throw InvalidArgument("active id " + std::to_string(id) + " outside the bank");
    out.push_back({id, bank.question(id).text, embedding.scores[order[i]]});
  }
  return out;
}

std::string format_explanation(std::span<const ExplainedDimension> rows) {
  std::ostringstream out;
  out << "Score  Question\n";
  for (const auto& r : rows) out << std::fixed << std::setprecision(3) << r.score << "  " << r.text << "\n";
  return out.str();
}

void save_embeddings(std::span<const DocEmbedding> embeddings, const std::filesystem::path& path, bool with_scores) {
  std::string out;
  for (const auto& d : embeddings) {
    nlohmann::ordered_json line;
    line["doc_id"] = d.doc_id;
    line["bank_hash"] = d.embedding.bank_hash;
    line["k"] = d.embedding.k;
    line["active"] = d.embedding.active;
    if (with_scores && !d.embedding.scores.empty()) line["scores"] = d.embedding.scores;
    out += line.dump() + "\n";
  }
  write_file(path, out);
}

std::vector<DocEmbedding> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<DocEmbedding> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      DocEmbedding d;
      d.doc_id = obj.at("doc_id").get<std::string>();
      d.embedding.bank_hash = obj.at("bank_hash").get<std::string>();
      d.embedding.k = obj.at("k").get<int>();
      d.embedding.active = obj.at("active").get<std::vector<int>>();
      if (obj.contains("scores")) d.embedding.scores = obj.at("scores").get<std::vector<double>>();
      if (!std::is_sorted(d.embedding.active.begin(), d.embedding.active.end()) ||
          std::adjacent_find(d.embedding.active.begin(), d.embedding.active.end()) != d.embedding.active.end()) {
        throw FormatError("active ids not strictly increasing");
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_heads(std::span<const LinearHead> heads, const std::string& bank_hash, const std::filesystem::path& path) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& h : heads) {
    nlohmann::ordered_json e;
    e["question_id"] = h.question_id;
    e["weights"] = std::vector<double>(h.weights.data(), h.weights.data() + h.weights.size());
    e["bias"] = h.bias;
    e["metadata"] = {{"bank_hash", bank_hash}, {"epochs", h.epochs}, {"final_loss", h.final_loss},
                     {"lr", h.lr},             {"l2", h.l2}};
    arr.push_back(std::move(e));
  }
  write_file(path, arr.dump() + "\n");
}

std::vector<LinearHead> load_heads(const std::filesystem::path& path, const std::string& expected_bank_hash) {
  std::vector<LinearHead> out;
  try {
    const auto arr = nlohmann::json::parse(read_file(path));
    Eigen::Index dim = -1;
    for (const auto& e : arr) {
      const auto& meta = e.at("metadata");
      if (meta.at("bank_hash").get<std::string>() != expected_bank_hash) {
        throw FormatError("head for question " + std::to_string(e.at("question_id").get<int>()) +
                          " was trained against a different bank");
      }
      const auto w = e.at("weights").get<std::vector<double>>();
      if (dim < 0) dim = static_cast<Eigen::Index>(w.size());
      if (static_cast<Eigen::Index>(w.size()) != dim) throw FormatError("heads have inconsistent dimensions");
      LinearHead h;
      h.question_id = e.at("question_id").get<int>();
      h.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), dim);
      h.bias = e.at("bias").get<double>();
      h.epochs = meta.value("epochs", 0);
      h.final_loss = meta.value("final_loss", 0.0);
      h.lr = meta.value("lr", 0.0);
      h.l2 = meta.value("l2", 0.0);
      if (!std::isfinite(h.final_loss)) throw FormatError("head final loss is not finite");
      out.push_back(std::move(h));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace qdim
