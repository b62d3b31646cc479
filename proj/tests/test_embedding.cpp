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

#include <doctest.h>

#include <set>

#include "qdim/embedding.hpp"
#include "qdim/util.hpp"
#include "oracles.hpp"

using namespace qdim;

namespace {

QuestionBank bank_from(const std::vector<std::vector<double>>& rows) {
  std::vector<Question> qs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Question q;
    q.id = static_cast<int>(i);
    q.text = "Question " + std::to_string(i) + "?";
    q.embedding = Eigen::Map<const DenseVector>(rows[i].data(), static_cast<Eigen::Index>(rows[i].size()));
    qs.push_back(std::move(q));
  }
  return QuestionBank(std::move(qs));
}

struct Instance {
  std::vector<std::vector<double>> rows;
  std::vector<double> doc;
};

Instance random_instance(Rng& rng, int max_m, int d) {
  Instance in;
  const int m = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(max_m)));
  for (int i = 0; i < m; ++i) {
    std::vector<double> r(static_cast<std::size_t>(d));
    for (auto& x : r) x = rng.normal();
    // Occasional exact duplicates exercise the tie rules.
    if (i > 0 && rng.uniform_real() < 0.1) r = in.rows[rng.uniform_index(in.rows.size())];
    in.rows.push_back(r);
  }
  in.doc.resize(static_cast<std::size_t>(d));
  for (auto& x : in.doc) x = rng.normal();
  return in;
}

DenseVector as_vec(const std::vector<double>& v) {
  return Eigen::Map<const DenseVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Greedy MMR written from the definition with plain loops.
std::vector<int> oracle_mmr(const Instance& in, int k, double lambda) {
  const int m = static_cast<int>(in.rows.size());
  std::vector<double> s(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) s[static_cast<std::size_t>(j)] = oracle::cosine(in.doc, in.rows[static_cast<std::size_t>(j)]);
  std::vector<int> chosen;
  std::vector<bool> used(static_cast<std::size_t>(m), false);
  while (static_cast<int>(chosen.size()) < std::min(k, m)) {
    int best = -1;
    double best_v = 0;
    for (int j = 0; j < m; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      double v = s[static_cast<std::size_t>(j)];
      if (!chosen.empty()) {
        double red = -2;
        for (int i : chosen) red = std::max(red, oracle::cosine(in.rows[static_cast<std::size_t>(j)], in.rows[static_cast<std::size_t>(i)]));
        v = lambda * v - (1 - lambda) * red;
      }
      if (best < 0 || v > best_v + 1e-12) {
        best = j;
        best_v = v;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

TEST_CASE("score_questions examples") {
  const auto bank = bank_from({{1, 0, 0}, {0, 1, 0}, {1, 1, 0}});
  const auto s = score_questions(DenseVector(Eigen::Vector3d(1, 0, 0)), bank);
  CHECK(s[0].score == doctest::Approx(1.0));
  CHECK(s[1].score == doctest::Approx(0.0));
  CHECK(s[2].score == doctest::Approx(oracle::cosine({1, 0, 0}, {1, 1, 0})));
  const auto zero = score_questions(DenseVector(Eigen::Vector3d(0, 0, 1)), bank);
  for (const auto& x : zero) CHECK(x.score == doctest::Approx(0.0));
  CHECK_THROWS_AS(score_questions(DenseVector(Eigen::Vector2d(1, 0)), bank), InvalidArgument);
}

TEST_CASE("embed_topk examples") {
  const std::vector<ScoredDimension> s{{0, 0.9}, {1, 0.1}, {2, 0.5}};
  CHECK(embed_topk(s, 2).active == std::vector<int>{0, 2});
  CHECK(embed_topk(s, 5).active == std::vector<int>{0, 1, 2});
  const std::vector<ScoredDimension> flat{{0, 0.3}, {1, 0.3}, {2, 0.3}};
  CHECK(embed_topk(flat, 2).active == std::vector<int>{0, 1});
  CHECK_THROWS_AS(embed_topk(s, 0), InvalidArgument);
}

TEST_CASE("embed_mmr examples") {
  // A and A' nearly identical; B orthogonal to both and less relevant.
  const double c = 0.99;
  const std::vector<double> a{1, 0, 0}, a2{c, std::sqrt(1 - c * c), 0}, b{0, 0, 1};
  const auto bank = bank_from({a, a2, b});
  // Cosines to the document: about 0.87 for A and A', about 0.49 for B.
  const DenseVector doc = DenseVector(Eigen::Vector3d(0.9, 0, 0.5));
  CHECK(0.7 * 0.87 - 0.3 * 0.99 < 0.7 * 0.49);  // why A' loses to B
  CHECK(embed_mmr(doc, bank, 1, 0.7).active == std::vector<int>{0});
  CHECK(embed_mmr(doc, bank, 2, 0.7).active == std::vector<int>{0, 2});
  CHECK_THROWS_AS(embed_mmr(doc, bank, 2, 1.5), InvalidArgument);
  CHECK_THROWS_AS(embed_mmr(DenseVector(Eigen::Vector2d(1, 0)), bank, 2, 0.5), InvalidArgument);
}

TEST_CASE("mmr matches a plain-loop oracle and degenerates to top-k at lambda 1") {
  Rng rng(101);
  for (int t = 0; t < 300; ++t) {
    const auto in = random_instance(rng, 40, 6);
    const auto bank = bank_from(in.rows);
    const int k = 1 + static_cast<int>(rng.uniform_index(45));
    const double lambda = rng.uniform_real();
    const auto doc = as_vec(in.doc);
    const auto mmr = embed_mmr(doc, bank, k, lambda);
    CHECK(mmr.active == oracle_mmr(in, k, lambda));
    CHECK(embed_mmr(doc, bank, k, 1.0).active == embed_topk(doc, bank, k).active);
    std::vector<double> s;
    for (const auto& r : in.rows) s.push_back(oracle::cosine(in.doc, r));
    CHECK(embed_topk(doc, bank, k).active == oracle::topk(s, k));
  }
}

TEST_CASE("sparsity and scale invariance over random banks") {
  Rng rng(102);
  for (int t = 0; t < 1000; ++t) {
    const auto in = random_instance(rng, 64, 5);
    const auto bank = bank_from(in.rows);
    const int m = bank.size();
    const int k = 1 + static_cast<int>(rng.uniform_index(80));
    const auto doc = as_vec(in.doc);
    const auto tf = embed_topk(doc, bank, k);
    const auto mmr = embed_mmr(doc, bank, k, 0.7);
    for (const auto* e : {&tf, &mmr}) {
      CHECK(static_cast<int>(e->active.size()) == std::min(k, m));
      CHECK(std::is_sorted(e->active.begin(), e->active.end()));
      CHECK(std::adjacent_find(e->active.begin(), e->active.end()) == e->active.end());
      CHECK(e->active.back() < m);
      CHECK(e->bank_hash == bank.bank_hash());
      CHECK(e->k == k);
    }
    const double alpha = 0.05 + 20 * rng.uniform_real();
    CHECK(embed_topk((alpha * doc).eval(), bank, k).active == tf.active);
    CHECK(embed_mmr((alpha * doc).eval(), bank, k, 0.7).active == mmr.active);
  }
}

TEST_CASE("mmr never takes both copies of a duplicate while a positive marginal remains (lambda <= 0.5)") {
  // For lambda <= 0.5 the second copy scores lambda*s - (1 - lambda) <= 0, so any
  // question with a positive marginal wins. Larger lambda does not give this guarantee.
  Rng rng(103);
  for (int t = 0; t < 300; ++t) {
    auto in = random_instance(rng, 20, 5);
    in.rows.push_back(in.rows[0]);
    const auto bank = bank_from(in.rows);
    const int dup = bank.size() - 1;
    const double lambda = 0.5 * rng.uniform_real();
    const int k = 2 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(bank.size())));
    const auto e = embed_mmr(as_vec(in.doc), bank, k, lambda);
    const bool both = std::count(e.active.begin(), e.active.end(), 0) && std::count(e.active.begin(), e.active.end(), dup);
    if (!both) continue;
    // Redundancy only grows after the second copy was chosen, so no remaining marginal can be positive.
    for (int j = 0; j < bank.size(); ++j) {
      if (std::count(e.active.begin(), e.active.end(), j)) continue;
      double red = -2;
      for (int i : e.active) red = std::max(red, oracle::cosine(in.rows[static_cast<std::size_t>(j)], in.rows[static_cast<std::size_t>(i)]));
      CHECK(lambda * oracle::cosine(in.doc, in.rows[static_cast<std::size_t>(j)]) - (1 - lambda) * red <= 1e-12);
    }
  }
}

TEST_CASE("binary similarity") {
  SparseBinaryEmbedding a{{0, 1, 2, 3}, "h", 4, {}}, b{{4, 5, 6, 7}, "h", 4, {}};
  CHECK(binary_similarity(a, a) == 1.0);
  CHECK(binary_similarity(a, b) == 0.0);
  SparseBinaryEmbedding x, y;
  x.bank_hash = y.bank_hash = "h";
  for (int i = 0; i < 256; ++i) {
    x.active.push_back(i);
    y.active.push_back(i < 64 ? i : 1000 + i);
  }
  CHECK(binary_similarity(x, y) == doctest::Approx(0.25));
  CHECK(jaccard_similarity(x, y) == doctest::Approx(64.0 / 448.0));
  SparseBinaryEmbedding other{{0}, "other", 1, {}};
  CHECK_THROWS_AS(binary_similarity(a, other), InvalidArgument);
  SparseBinaryEmbedding empty{{}, "h", 0, {}};
  CHECK_THROWS_AS(binary_similarity(a, empty), InvalidArgument);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    SparseBinaryEmbedding p{{}, "h", 0, {}}, q{{}, "h", 0, {}};
    std::vector<int> pool(30);
    std::iota(pool.begin(), pool.end(), 0);
    p.active = rng.sample<int>(pool, 6);
    q.active = rng.sample<int>(pool, 6);
    std::sort(p.active.begin(), p.active.end());
    std::sort(q.active.begin(), q.active.end());
    CHECK(binary_similarity(p, q) == binary_similarity(q, p));
    CHECK((binary_similarity(p, q) == 1.0) == (p.active == q.active));
  }
}

TEST_CASE("classifier dataset") {
  RowMatrix c(3, 2);
  c << 1, 0, 0.7, 0.7, 0, 1;
  const ClusterModel toy(c, {"a", "b", "c"}, {0, 1, 2}, 0.0);
  const auto ds = build_classifier_dataset(0, toy, {1, 1, 1, 1}, 3);
  REQUIRE(ds.items.size() == 3);
  std::set<std::string> ids;
  for (const auto& it : ds.items) ids.insert(it.doc_id);
  CHECK(ids.size() == 3);
  CHECK(ds.items[0].label == 1);
  CHECK(ds.items[1].label == 0);
  CHECK_FALSE(ds.with_replacement);
  CHECK_THROWS_AS(build_classifier_dataset(9, toy, {1, 1, 1, 1}, 3), InvalidArgument);

  RowMatrix big(8, 2);
  for (int i = 0; i < 8; ++i) big.row(i) << std::cos(i), std::sin(i);
  std::vector<std::string> docs;
  std::vector<int> assign;
  for (int i = 0; i < 2000; ++i) {
    docs.push_back("d" + std::to_string(i));
    assign.push_back(i % 8);
  }
  const ClusterModel m(big, docs, assign, 0.0);
  const auto full = build_classifier_dataset(2, m, {}, 11);
  CHECK(full.items.size() == 1000);
  CHECK(std::count_if(full.items.begin(), full.items.end(), [](const auto& x) { return x.label == 1; }) == 300);
  CHECK(full.with_replacement);  // 250 members for 300 positives
  const auto again = build_classifier_dataset(2, m, {}, 11);
  for (std::size_t i = 0; i < full.items.size(); ++i) CHECK(full.items[i].doc_id == again.items[i].doc_id);
}

TEST_CASE("logistic training") {
  RowMatrix x(4, 2);
  x << 1, 2, -1, -2, 2, 1, -2, -1;
  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  CHECK(std::abs(logistic_loss(x, y, Eigen::VectorXd::Zero(2), 0.0, 0.0) - std::log(2.0)) < 1e-12);
  std::vector<double> history;
  const auto head = train_linear_head(x, y, {0.5, 300, 1e-4}, 3, &history);
  for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1]);
  CHECK(std::isfinite(head.final_loss));
  CHECK(head.question_id == 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double p = sigmoid(head.weights.dot(x.row(i).transpose()) + head.bias);
    CHECK((p >= 0.5) == (y(i) == 1.0));
  }
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(train_linear_head(x, ones, {}), InvalidArgument);
  CHECK_THROWS_AS(train_linear_head(x, y, {0.0, 10, 0.0}), InvalidArgument);
}

TEST_CASE("logistic gradient matches finite differences") {
  Rng rng(44);
  for (int t = 0; t < 20; ++t) {
    const int n = 10 + static_cast<int>(rng.uniform_index(20));
    RowMatrix x(n, 5);
    Eigen::VectorXd y(n);
    std::vector<oracle::Vec> ox(static_cast<std::size_t>(n), oracle::Vec(5));
    oracle::Vec oy(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 5; ++j) ox[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = x(i, j) = rng.normal();
      oy[static_cast<std::size_t>(i)] = y(i) = static_cast<double>(rng.uniform_index(2));
    }
    y(0) = 0;
    y(1) = 1;
    oy[0] = 0;
    oy[1] = 1;
    oracle::Vec wb(6);
    for (auto& v : wb) v = rng.normal();
    const double l2 = 0.1 * rng.uniform_real();
    const Eigen::VectorXd w = Eigen::Map<Eigen::VectorXd>(wb.data(), 5);
    const auto g = logistic_gradient(x, y, w, wb[5], l2);
    CHECK(logistic_loss(x, y, w, wb[5], l2) == doctest::Approx(oracle::logistic_loss(ox, oy, wb, l2)).epsilon(1e-12));
    const auto num = oracle::numeric_gradient([&](const oracle::Vec& p) { return oracle::logistic_loss(ox, oy, p, l2); }, wb);
    for (std::size_t i = 0; i < 6; ++i) {
      const double rel = std::abs(g(static_cast<Eigen::Index>(i)) - num[i]) / std::max(1.0, std::abs(num[i]));
      CHECK(rel <= 1e-5);
    }
  }
}

TEST_CASE("embed_classifier") {
  LinearHead always{0, DenseVector::Zero(2), 50.0};
  LinearHead boundary{1, DenseVector::Zero(2), 0.0};
  LinearHead never{2, DenseVector::Zero(2), -50.0};
  const std::vector<LinearHead> heads{always, boundary, never};
  const auto e = embed_classifier(DenseVector(Eigen::Vector2d(3, -1)), heads, 0.5, "h");
  CHECK(e.active == std::vector<int>{0, 1});
  CHECK(e.k == 2);

  std::vector<LinearHead> hand;
  const std::vector<std::vector<double>> w{{0.5, -1.0}, {2.0, 0.1}, {-0.3, -0.3}};
  const std::vector<double> b{0.2, -1.0, 0.4};
  for (int i = 0; i < 3; ++i) hand.push_back({i, as_vec(w[static_cast<std::size_t>(i)]), b[static_cast<std::size_t>(i)]});
  const std::vector<double> x{0.4, 0.9};
  const auto got = embed_classifier(as_vec(x), hand, 0.45, "h");
  std::vector<int> expect;
  for (int i = 0; i < 3; ++i) {
    const double z = oracle::dot(w[static_cast<std::size_t>(i)], x) + b[static_cast<std::size_t>(i)];
    if (1 / (1 + std::exp(-z)) >= 0.45) expect.push_back(i);
  }
  CHECK(got.active == expect);
  CHECK_THROWS_AS(embed_classifier(DenseVector::Zero(3), hand, 0.5), InvalidArgument);
}

TEST_CASE("explanations") {
  const auto bank = bank_from({{1, 0, 0}, {0.8, 0.6, 0}, {0, 0, 1}, {0, 1, 0}});
  const DenseVector doc = DenseVector(Eigen::Vector3d(1, 0.5, 0.2));
  const auto tf = embed_topk(doc, bank, 3);
  const auto one = explain(tf, bank, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].question_id == 1);  // highest raw cosine
  CHECK(explain(tf, bank, 10).size() == 3);

  const auto mmr = embed_mmr(doc, bank, 3, 0.5);
  const auto rows = explain(mmr, bank, 3);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].score >= rows[i].score);
  const auto text = format_explanation(rows);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);  // header plus three rows

  SparseBinaryEmbedding foreign = tf;
  foreign.bank_hash = "nope";
  CHECK_THROWS_AS(explain(foreign, bank, 2), InvalidArgument);
}

TEST_CASE("embedding and head files round trip") {
  oracle::TempDir dir("embedding");
  const auto bank = bank_from({{1, 0}, {0, 1}, {1, 1}});
  std::vector<DocEmbedding> docs{{"d1", embed_topk(DenseVector(Eigen::Vector2d(1, 0.1)), bank, 2)},
                                 {"d2", embed_mmr(DenseVector(Eigen::Vector2d(0.1, 1)), bank, 2, 0.7)}};
  save_embeddings(docs, dir / "e.jsonl");
  const auto back = load_embeddings(dir / "e.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].doc_id == "d1");
  CHECK(back[1].embedding == docs[1].embedding);

  std::vector<LinearHead> heads{{0, as_vec({0.5, -0.5}), 0.1, 10, 0.3, 0.5, 1e-4}};
  save_heads(heads, bank.bank_hash(), dir / "h.json");
  const auto hb = load_heads(dir / "h.json", bank.bank_hash());
  REQUIRE(hb.size() == 1);
  CHECK(hb[0].weights == heads[0].weights);
  CHECK(hb[0].epochs == 10);
  CHECK_THROWS_AS(load_heads(dir / "h.json", "different"), FormatError);
}
