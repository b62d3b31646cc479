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

#include "qdim/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "qdim/util.hpp"

namespace qdim {

namespace {

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

std::vector<int> dense_labels(std::span<const int> labels, int& classes) {
  std::map<int, int> remap;
  std::vector<int> out;
  for (int l : labels) out.push_back(remap.emplace(l, static_cast<int>(remap.size())).first->second);
  classes = static_cast<int>(remap.size());
  return out;
}

}  // namespace

VMeasure v_measure(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size()) throw InvalidArgument("v_measure: label arrays differ in length");
  if (gold.empty()) throw InvalidArgument("v_measure: no labels");
  int nc = 0;
  int nk = 0;
  const auto c = dense_labels(gold, nc);
  const auto k = dense_labels(pred, nk);
  const double n = static_cast<double>(gold.size());
  std::vector<double> table(static_cast<std::size_t>(nc * nk), 0.0);
  std::vector<double> class_counts(static_cast<std::size_t>(nc), 0.0);
  std::vector<double> cluster_counts(static_cast<std::size_t>(nk), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    table[static_cast<std::size_t>(c[i] * nk + k[i])] += 1.0;
    class_counts[static_cast<std::size_t>(c[i])] += 1.0;
    cluster_counts[static_cast<std::size_t>(k[i])] += 1.0;
  }
  const double h_c = entropy(class_counts, n);
  const double h_k = entropy(cluster_counts, n);
  // H(C|K) and H(K|C) from the contingency table.
  double h_c_given_k = 0.0;
  double h_k_given_c = 0.0;
  for (int a = 0; a < nc; ++a) {
    for (int b = 0; b < nk; ++b) {
      const double nab = table[static_cast<std::size_t>(a * nk + b)];
      if (nab == 0) continue;
      h_c_given_k -= (nab / n) * std::log(nab / cluster_counts[static_cast<std::size_t>(b)]);
      h_k_given_c -= (nab / n) * std::log(nab / class_counts[static_cast<std::size_t>(a)]);
    }
  }
  VMeasure out;
  out.homogeneity = h_c == 0.0 ? 1.0 : std::clamp(1.0 - h_c_given_k / h_c, 0.0, 1.0);
  out.completeness = h_k == 0.0 ? 1.0 : std::clamp(1.0 - h_k_given_c / h_k, 0.0, 1.0);
  const double sum = out.homogeneity + out.completeness;
  out.v = sum == 0.0 ? 0.0 : 2.0 * out.homogeneity * out.completeness / sum;
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: arrays differ in length");
  if (x.size() < 2) throw InvalidArgument("spearman: need at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const Eigen::Map<const Eigen::VectorXd> a(rx.data(), static_cast<Eigen::Index>(rx.size()));
  const Eigen::Map<const Eigen::VectorXd> b(ry.data(), static_cast<Eigen::Index>(ry.size()));
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double va = da.squaredNorm();
  const double vb = db.squaredNorm();
  if (va == 0.0) throw InvalidArgument("spearman: first array is constant");
  if (vb == 0.0) throw InvalidArgument("spearman: second array is constant");
  return std::clamp(da.dot(db) / std::sqrt(va * vb), -1.0, 1.0);
}

double ndcg_at_k(std::span<const std::string> ranked, const QrelRow& grades, int k, Gain gain) {
  if (k < 1) throw InvalidArgument("ndcg_at_k: k must be at least 1");
  std::set<std::string_view> seen;
  for (const auto& id : ranked) {
    if (!seen.insert(id).second) throw InvalidArgument("ndcg_at_k: duplicate id '" + id + "' in ranking");
  }
  auto g = [gain](int rel) { return gain == Gain::linear ? static_cast<double>(rel) : std::exp2(rel) - 1.0; };
  std::vector<int> ideal;
  for (const auto& [id, rel] : grades) {
    if (rel < 0) throw InvalidArgument("negative relevance grade for '" + id + "'");
    if (rel > 0) ideal.push_back(rel);
  }
  if (ideal.empty()) return 0.0;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size() && static_cast<int>(i) < k; ++i) {
    idcg += g(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < k; ++i) {
    auto it = grades.find(ranked[i]);
    if (it != grades.end() && it->second > 0) dcg += g(it->second) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string first_string(const nlohmann::json& obj, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    if (auto it = obj.find(key); it != obj.end()) {
      return it->is_string() ? it->get<std::string>() : it->dump();
    }
  }
  throw FormatError("record lacks an id field");
}

}  // namespace

ClusteringDataset load_clustering_dataset(const std::filesystem::path& path) {
  ClusteringDataset ds;
  std::map<std::string, int> labels;
  for_each_json_line(path, [&](const nlohmann::json& obj) {
    ds.ids.push_back(first_string(obj, {"doc_id", "id"}));
    ds.texts.push_back(obj.at("text").get<std::string>());
    const auto& l = obj.at("label");
    const auto name = l.is_string() ? l.get<std::string>() : l.dump();
    auto [it, inserted] = labels.emplace(name, static_cast<int>(labels.size()));
    if (inserted) ds.label_names.push_back(name);
    ds.labels.push_back(it->second);
  });
  return ds;
}

StsDataset load_sts_dataset(const std::filesystem::path& path) {
  StsDataset ds;
  for_each_json_line(path, [&](const nlohmann::json& obj) {
    ds.pairs.emplace_back(obj.at("text_a").get<std::string>(), obj.at("text_b").get<std::string>());
    ds.scores.push_back(obj.at("score").get<double>());
  });
  return ds;
}

std::vector<TextRecord> load_records(const std::filesystem::path& path) {
  std::vector<TextRecord> out;
  std::set<std::string> seen;
  for_each_json_line(path, [&](const nlohmann::json& obj) {
    TextRecord r{first_string(obj, {"id", "doc_id", "query_id", "_id"}), obj.at("text").get<std::string>()};
    if (!seen.insert(r.id).second) throw FormatError(path.string() + ": duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Qrels out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(trim(col));
    if (cols.size() != 3) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated columns");
    int grade = 0;
    const auto [ptr, ec] = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), grade);
    if (ec != std::errc() || ptr != cols[2].data() + cols[2].size()) {
      if (lineno == 1) continue;
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": grade '" + cols[2] + "' is not an integer");
    }
    if (grade < 0) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": negative grade");
    out[cols[0]][cols[1]] = grade;
  }
  if (out.empty()) throw FormatError("'" + path.string() + "' holds no judgments");
  return out;
}

std::string to_string(EmbedMethod method) {
  switch (method) {
    case EmbedMethod::tf: return "tf";
    case EmbedMethod::tf_mmr: return "tf-mmr";
    case EmbedMethod::classifier: return "classifier";
  }
  return "?";
}

EmbedMethod parse_embed_method(const std::string& name) {
  if (name == "tf") return EmbedMethod::tf;
  if (name == "tf-mmr") return EmbedMethod::tf_mmr;
  if (name == "classifier") return EmbedMethod::classifier;
  throw InvalidArgument("unknown embedding method '" + name + "' (expected tf, tf-mmr or classifier)");
}

SparseBinaryEmbedding embed_vector(const DenseVector& doc, const QuestionBank& bank, const EmbedSettings& settings,
                                   std::span<const LinearHead> heads) {
  switch (settings.method) {
    case EmbedMethod::tf: return embed_topk(doc, bank, settings.k);
    case EmbedMethod::tf_mmr: return embed_mmr(doc, bank, settings.k, settings.lambda);
    case EmbedMethod::classifier:
      if (heads.empty()) throw InvalidArgument("classifier embedding needs trained heads");
      return embed_classifier(doc, heads, settings.tau, bank.bank_hash());
  }
  throw InvalidArgument("unknown embedding method");
}

QuestionBackend::QuestionBackend(std::shared_ptr<const TextEncoder> encoder, std::shared_ptr<const QuestionBank> bank,
                                 EmbedSettings settings, std::vector<LinearHead> heads)
    : encoder_(std::move(encoder)), bank_(std::move(bank)), settings_(settings), heads_(std::move(heads)) {
  if (encoder_->dim() != bank_->encoder_dim()) {
    throw InvalidArgument("encoder dimension " + std::to_string(encoder_->dim()) + " does not match bank encoder_dim " +
                          std::to_string(bank_->encoder_dim()));
  }
}

std::string QuestionBackend::name() const {
  std::ostringstream s;
  s << to_string(settings_.method) << "(" << encoder_->name();
  if (settings_.method == EmbedMethod::classifier) {
    s << ", tau=" << settings_.tau;
  } else {
    s << ", k=" << settings_.k;
    if (settings_.method == EmbedMethod::tf_mmr) s << ", lambda=" << settings_.lambda;
  }
  s << ", M=" << bank_->size() << ")";
  return s.str();
}

std::vector<SparseBinaryEmbedding> QuestionBackend::embed(std::span<const std::string> texts) const {
  const auto vectors = encoder_->encode(texts);
  std::vector<SparseBinaryEmbedding> out(vectors.size());
  parallel_for(vectors.size(), settings_.workers,
               [&](std::size_t i) { out[i] = embed_vector(vectors[i], *bank_, settings_, heads_); });
  return out;
}

double QuestionBackend::similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) const {
  return qdim::similarity(a, b, settings_.similarity);
}

std::string QuestionBackend::similarity_name() const {
  return settings_.similarity == SimilarityKind::cosine ? "binary-cosine" : "jaccard";
}

double EvalReport::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  throw InvalidArgument("report has no metric '" + name + "'");
}

namespace {
constexpr int kClusteringRestarts = 5;
}  // namespace

EvalReport run_clustering_task(std::span<const SparseBinaryEmbedding> embeddings, std::span<const int> gold, int k,
                               std::uint64_t seed, int bank_size) {
  if (embeddings.size() != gold.size()) {
    throw InvalidArgument("clustering task: " + std::to_string(embeddings.size()) + " embeddings for " +
                          std::to_string(gold.size()) + " labeled documents");
  }
  int classes = 0;
  dense_labels(gold, classes);
  if (k == 0) k = classes;
  int dim = bank_size;
  for (const auto& e : embeddings) {
    if (e.active.empty()) throw InvalidArgument("clustering task: embedding with no active dimensions");
    dim = std::max(dim, e.active.back() + 1);
  }
  RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(embeddings.size()), dim);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (int j : embeddings[i].active) x(static_cast<Eigen::Index>(i), j) = 1.0;
    ids.push_back(std::to_string(i));
  }
  // A single k-means++ draw can merge two classes; keep the best of a few seeded restarts.
  const VectorMatrix data(std::move(ids), std::move(x));
  std::optional<ClusterModel> best;
  for (int r = 0; r < kClusteringRestarts; ++r) {
    auto model = kmeans(data, k, r == 0 ? seed : derive_seed(seed, "restart/" + std::to_string(r)));
    if (!best || model.inertia() < best->inertia()) best = std::move(model);
  }
  const auto vm = v_measure(gold, best->assignments());
  EvalReport r;
  r.task = "clustering";
  r.metrics = {{"homogeneity", vm.homogeneity}, {"completeness", vm.completeness}, {"v_measure", vm.v}};
  r.config["k_clusters"] = k;
  r.config["seed"] = seed;
  r.config["restarts"] = kClusteringRestarts;
  return r;
}

EvalReport run_sts_task(std::span<const std::pair<std::string, std::string>> pairs, std::span<const double> gold,
                        const EmbeddingBackend& backend) {
  if (pairs.size() != gold.size()) throw InvalidArgument("sts task: pair count does not match score count");
  if (pairs.size() < 2) throw InvalidArgument("sts task: need at least two pairs");
  std::vector<std::string> texts;
  for (const auto& [a, b] : pairs) {
    texts.push_back(a);
    texts.push_back(b);
  }
  const auto emb = backend.embed(texts);
  std::vector<double> predicted;
  for (std::size_t i = 0; i < pairs.size(); ++i) predicted.push_back(backend.similarity(emb[2 * i], emb[2 * i + 1]));
  EvalReport r;
  r.task = "sts";
  r.backend = backend.name();
  r.similarity = backend.similarity_name();
  r.metrics = {{"spearman", spearman(predicted, gold)}};
  return r;
}

EvalReport run_retrieval_task(std::span<const TextRecord> queries, std::span<const TextRecord> corpus,
                              const Qrels& qrels, const EmbeddingBackend& backend, int k, Gain gain,
                              std::size_t workers) {
  if (queries.empty()) throw InvalidArgument("retrieval task: no queries");
  std::set<std::string> corpus_ids;
  for (const auto& d : corpus) corpus_ids.insert(d.id);
  std::vector<std::string> unknown;
  for (const auto& [qid, row] : qrels) {
    for (const auto& [did, grade] : row) {
      if (!corpus_ids.count(did)) unknown.push_back(qid + "/" + did);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "retrieval task: qrels reference documents missing from the corpus:";
    for (const auto& u : unknown) msg += " " + u;
    throw InvalidArgument(msg);
  }
  std::vector<std::string> qtexts;
  std::vector<std::string> dtexts;
  for (const auto& q : queries) qtexts.push_back(q.text);
  for (const auto& d : corpus) dtexts.push_back(d.text);
  const auto qemb = backend.embed(qtexts);
  const auto demb = backend.embed(dtexts);

  // Ties in similarity fall back to lexicographic doc id.
  std::vector<std::size_t> by_id(corpus.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return corpus[a].id < corpus[b].id; });

  std::vector<double> per_query(queries.size(), 0.0);
  static const QrelRow kEmpty;
  parallel_for(queries.size(), workers, [&](std::size_t qi) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(corpus.size());
    for (std::size_t rank = 0; rank < by_id.size(); ++rank) {
      scored.emplace_back(backend.similarity(qemb[qi], demb[by_id[rank]]), rank);
    }
    const auto top = std::min(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top), scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::string> ranked;
    for (std::size_t i = 0; i < top; ++i) ranked.push_back(corpus[by_id[scored[i].second]].id);
    auto it = qrels.find(queries[qi].id);
    per_query[qi] = ndcg_at_k(ranked, it == qrels.end() ? kEmpty : it->second, k, gain);
  });
  double sum = 0.0;
  for (double v : per_query) sum += v;
  EvalReport r;
  r.task = "retrieval";
  r.backend = backend.name();
  r.similarity = backend.similarity_name();
  r.metrics = {{"ndcg@" + std::to_string(k), sum / static_cast<double>(queries.size())}};
  r.config["gain"] = gain == Gain::linear ? "linear" : "exponential";
  r.config["queries"] = queries.size();
  return r;
}

nlohmann::ordered_json report_to_json(std::span<const EvalReport> reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["dataset"] = r.dataset;
    j["backend"] = r.backend;
    j["similarity"] = r.similarity;
    auto m = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.metrics) m[k] = v;
    j["metrics"] = std::move(m);
    j["config"] = r.config;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string report_to_table(std::span<const EvalReport> reports) {
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"task", "dataset", "backend", "metric", "value"});
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.metrics) {
      std::ostringstream val;
      val << std::fixed << std::setprecision(4) << v;
      rows.push_back({r.task, r.dataset, r.backend, k, val.str()});
    }
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c + 1 == row.size()) {
        out << std::setw(static_cast<int>(width[c])) << std::right << row[c];
      } else {
        out << std::setw(static_cast<int>(width[c])) << std::left << row[c] << "  ";
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace qdim
