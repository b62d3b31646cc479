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

#include <fstream>
#include <set>

#include "qdim/eval.hpp"
#include "qdim/util.hpp"
#include "oracles.hpp"

using namespace qdim;

namespace {

/// Texts are "a,b,c" lists of active dimensions.
class ListBackend : public EmbeddingBackend {
public:
  std::string name() const override { return "list"; }
  std::vector<SparseBinaryEmbedding> embed(std::span<const std::string> texts) const override {
    std::vector<SparseBinaryEmbedding> out;
    for (const auto& t : texts) {
      SparseBinaryEmbedding e;
      e.bank_hash = "toy";
      std::istringstream ss(t);
      std::string tok;
      while (std::getline(ss, tok, ',')) e.active.push_back(std::stoi(tok));
      std::sort(e.active.begin(), e.active.end());
      e.k = static_cast<int>(e.active.size());
      out.push_back(std::move(e));
    }
    return out;
  }
};

/// Similarity is read from a table keyed by the first active dimension of each side.
class TableBackend : public ListBackend {
public:
  explicit TableBackend(std::map<std::pair<int, int>, double> t) : table_(std::move(t)) {}
  double similarity(const SparseBinaryEmbedding& a, const SparseBinaryEmbedding& b) const override {
    return table_.at({a.active.front(), b.active.front()});
  }

private:
  std::map<std::pair<int, int>, double> table_;
};

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> out(n);
  for (auto& x : out) x = static_cast<int>(rng.uniform_index(classes));
  return out;
}

}  // namespace

TEST_CASE("v_measure examples") {
  const std::vector<int> g{0, 0, 1, 1, 2, 2};
  const auto same = v_measure(g, g);
  CHECK(same.homogeneity == doctest::Approx(1.0));
  CHECK(same.completeness == doctest::Approx(1.0));
  CHECK(same.v == doctest::Approx(1.0));
  const std::vector<int> g2{0, 0, 1, 1}, one{5, 5, 5, 5};
  const auto degenerate = v_measure(g2, one);
  CHECK(degenerate.homogeneity == doctest::Approx(0.0));
  CHECK(degenerate.completeness == 1.0);
  CHECK(degenerate.v == doctest::Approx(0.0));
  const std::vector<int> p{0, 1, 1, 1};
  const auto got = v_measure(g2, p);
  const auto want = oracle::v_measure(g2, p);
  CHECK(std::abs(got.homogeneity - want.h) < 1e-9);
  CHECK(std::abs(got.completeness - want.c) < 1e-9);
  CHECK(std::abs(got.v - want.v) < 1e-9);
  CHECK_THROWS_AS(v_measure(g2, g), InvalidArgument);
  CHECK_THROWS_AS(v_measure(std::vector<int>{}, std::vector<int>{}), InvalidArgument);
}

TEST_CASE("spearman examples") {
  const std::vector<double> x{1, 2, 3, 4, 5}, up{2, 4, 8, 16, 32}, down{9, 7, 5, 3, 1};
  CHECK(spearman(x, up) == doctest::Approx(1.0));
  CHECK(spearman(x, down) == doctest::Approx(-1.0));
  const std::vector<double> a{1, 2, 2, 4}, b{1, 3, 2, 4};
  CHECK(std::abs(spearman(a, b) - oracle::spearman(a, b)) < 1e-12);
  CHECK(average_ranks(a) == std::vector<double>{1, 2.5, 2.5, 4});
  const std::vector<double> flat{3, 3, 3, 3};
  CHECK_THROWS_AS(spearman(flat, b), InvalidArgument);
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{2}), InvalidArgument);
}

TEST_CASE("ndcg examples") {
  const QrelRow grades{{"A", 2}, {"B", 1}};
  const std::vector<std::string> ideal{"A", "B", "C"}, swapped{"B", "A", "C"};
  CHECK(ndcg_at_k(ideal, grades) == doctest::Approx(1.0));
  CHECK(ndcg_at_k(ideal, QrelRow{{"Z", 0}}) == 0.0);
  const double want = (1.0 / 1.0 + 2.0 / std::log2(3.0)) / (2.0 / 1.0 + 1.0 / std::log2(3.0));
  CHECK(std::abs(ndcg_at_k(swapped, grades) - want) < 1e-12);
  CHECK(std::abs(ndcg_at_k(swapped, grades) - oracle::ndcg(swapped, grades, 10)) < 1e-12);
  CHECK(std::abs(ndcg_at_k(swapped, grades, 10, Gain::exponential) - oracle::ndcg(swapped, grades, 10, true)) < 1e-12);
  const std::vector<std::string> dup{"A", "A"};
  CHECK_THROWS_AS(ndcg_at_k(dup, grades), InvalidArgument);
}

TEST_CASE("metrics agree with brute-force oracles on random instances") {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.uniform_index(49);
    const auto g = random_labels(rng, n, 1 + rng.uniform_index(5));
    const auto p = random_labels(rng, n, 1 + rng.uniform_index(5));
    const auto got = v_measure(g, p);
    const auto want = oracle::v_measure(g, p);
    CHECK(std::abs(got.v - want.v) < 1e-9);
    CHECK(std::abs(got.homogeneity - want.h) < 1e-9);
    CHECK(std::abs(got.completeness - want.c) < 1e-9);
    for (double m : {got.v, got.homogeneity, got.completeness}) CHECK((m >= -1e-12 && m <= 1 + 1e-12));

    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.uniform_index(6));  // ties on purpose
      y[i] = rng.normal();
    }
    x[0] = 0;
    x[1] = 7;
    CHECK(std::abs(spearman(x, y) - oracle::spearman(x, y)) < 1e-9);

    QrelRow row;
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < n; ++i) {
      docs.push_back("d" + std::to_string(i));
      if (rng.uniform_real() < 0.4) row[docs.back()] = static_cast<int>(rng.uniform_index(4));
    }
    docs = rng.sample<std::string>(docs, docs.size());
    const int k = 1 + static_cast<int>(rng.uniform_index(15));
    CHECK(std::abs(ndcg_at_k(docs, row, k) - oracle::ndcg(docs, row, k)) < 1e-9);
  }
}

TEST_CASE("metric invariances") {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.uniform_index(30);
    const auto g = random_labels(rng, n, 4);
    const auto p = random_labels(rng, n, 4);
    std::vector<int> perm{3, 0, 2, 1};
    auto g2 = g, p2 = p;
    for (auto& x : g2) x = perm[static_cast<std::size_t>(x)] + 10;
    for (auto& x : p2) x = perm[static_cast<std::size_t>(3 - x)];
    CHECK(std::abs(v_measure(g, p).v - v_measure(g2, p2).v) < 1e-12);

    std::vector<double> x(n), y(n), fx(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      fx[i] = std::exp(3 * x[i]) - 7;
    }
    CHECK(std::abs(spearman(x, y) - spearman(fx, y)) < 1e-12);

    // Shuffling zero-grade documents below rank k leaves nDCG@k unchanged.
    QrelRow row{{"r0", 3}, {"r1", 1}};
    std::vector<std::string> ranked{"r1", "x0", "r0"};
    for (std::size_t i = 1; i < n; ++i) ranked.push_back("x" + std::to_string(i));
    const double before = ndcg_at_k(ranked, row, 3);
    std::vector<std::string> shuffled = ranked;
    std::vector<std::string> tail(shuffled.begin() + 3, shuffled.end());
    tail = rng.sample<std::string>(tail, tail.size());
    std::copy(tail.begin(), tail.end(), shuffled.begin() + 3);
    CHECK(ndcg_at_k(shuffled, row, 3) == before);
  }
}

TEST_CASE("clustering task") {
  std::vector<SparseBinaryEmbedding> emb;
  std::vector<int> gold;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 25; ++i) {
      emb.push_back({{c * 10, c * 10 + 1, c * 10 + 2, c * 10 + 3 + i % 5}, "toy", 4, {}});
      gold.push_back(c);
    }
  }
  const auto r = run_clustering_task(emb, gold, 0, 7);
  CHECK(r.metric("v_measure") > 0.99);
  CHECK(r.config["k_clusters"] == 4);
  const auto again = run_clustering_task(emb, gold, 0, 7);
  CHECK(report_to_json(std::span(&r, 1)).dump() == report_to_json(std::span(&again, 1)).dump());

  Rng rng(3);
  const auto noise = random_labels(rng, gold.size(), 4);
  CHECK(run_clustering_task(emb, noise, 0, 7).metric("v_measure") < 0.15);
  CHECK_THROWS_AS(run_clustering_task(std::span(emb).first(10), gold, 0, 7), InvalidArgument);
}

TEST_CASE("sts task") {
  const std::vector<double> gold{0.1, 0.9, 0.4, 0.7, 0.3};
  std::vector<std::pair<std::string, std::string>> pairs;
  std::map<std::pair<int, int>, double> same, neg;
  for (int i = 0; i < 5; ++i) {
    pairs.emplace_back(std::to_string(2 * i), std::to_string(2 * i + 1));
    same[{2 * i, 2 * i + 1}] = gold[static_cast<std::size_t>(i)];
    neg[{2 * i, 2 * i + 1}] = -gold[static_cast<std::size_t>(i)];
  }
  CHECK(run_sts_task(pairs, gold, TableBackend(same)).metric("spearman") == doctest::Approx(1.0));
  CHECK(run_sts_task(pairs, gold, TableBackend(neg)).metric("spearman") == doctest::Approx(-1.0));

  // Five pairs of active lists scored by binary cosine.
  const std::vector<std::pair<std::string, std::string>> lists{
      {"1,2,3,4", "1,2,3,4"}, {"1,2,3,4", "1,2,5,6"}, {"1,2,3,4", "5,6,7,8"}, {"1,2", "1,3"}, {"1,2,3", "1,2,4"}};
  const std::vector<double> human{5.0, 2.5, 0.2, 2.0, 3.8};
  std::vector<double> predicted;
  for (const auto& [a, b] : lists) {
    std::set<std::string> sa, sb;
    std::istringstream xa(a), xb(b);
    for (std::string t; std::getline(xa, t, ',');) sa.insert(t);
    for (std::string t; std::getline(xb, t, ',');) sb.insert(t);
    double inter = 0;
    for (const auto& t : sa) inter += static_cast<double>(sb.count(t));
    predicted.push_back(inter / std::sqrt(static_cast<double>(sa.size() * sb.size())));
  }
  const auto r = run_sts_task(lists, human, ListBackend());
  CHECK(std::abs(r.metric("spearman") - oracle::spearman(predicted, human)) < 1e-12);
  CHECK(r.similarity == "binary-cosine");
  CHECK_THROWS_AS(run_sts_task(std::span(lists).first(1), std::span(human).first(1), ListBackend()), InvalidArgument);
}

TEST_CASE("retrieval task") {
  const std::vector<TextRecord> corpus{{"d1", "1,2"}, {"d2", "3,4"}, {"d3", "5,6"}, {"d4", "1,3"}, {"d5", "2,5"}};
  const std::vector<TextRecord> exact{{"q1", "1,2"}, {"q2", "3,4"}, {"q3", "5,6"}};
  const Qrels unique{{"q1", {{"d1", 1}}}, {"q2", {{"d2", 1}}}, {"q3", {{"d3", 1}}}};
  CHECK(run_retrieval_task(exact, corpus, unique, ListBackend()).metric("ndcg@10") == doctest::Approx(1.0));

  Qrels partial = unique;
  partial.erase("q3");
  CHECK(run_retrieval_task(exact, corpus, partial, ListBackend()).metric("ndcg@10") == doctest::Approx(2.0 / 3.0));

  // Three queries scored against a direct per-query oracle.
  const std::vector<TextRecord> queries{{"a", "1"}, {"b", "3,5"}, {"c", "2,6"}};
  const Qrels graded{{"a", {{"d4", 2}, {"d2", 1}}}, {"b", {{"d3", 1}, {"d5", 3}}}, {"c", {{"d1", 1}}}};
  auto cos = [](const std::string& x, const std::string& y) {
    std::set<char> a, b;
    for (char ch : x)
      if (ch != ',') a.insert(ch);
    for (char ch : y)
      if (ch != ',') b.insert(ch);
    double inter = 0;
    for (char ch : a) inter += static_cast<double>(b.count(ch));
    return inter / std::sqrt(static_cast<double>(a.size() * b.size()));
  };
  double sum = 0;
  for (const auto& q : queries) {
    std::vector<std::pair<double, std::string>> s;
    for (const auto& d : corpus) s.emplace_back(-cos(q.text, d.text), d.id);
    std::sort(s.begin(), s.end());
    std::vector<std::string> ranked;
    for (const auto& [_, id] : s) ranked.push_back(id);
    sum += oracle::ndcg(ranked, graded.at(q.id), 3);
  }
  const auto r = run_retrieval_task(queries, corpus, graded, ListBackend(), 3, Gain::linear, 3);
  CHECK(std::abs(r.metric("ndcg@3") - sum / 3) < 1e-12);
  CHECK(r.metric("ndcg@3") == run_retrieval_task(queries, corpus, graded, ListBackend(), 3).metric("ndcg@3"));

  const Qrels bad{{"a", {{"missing", 1}, {"d1", 1}}}};
  try {
    run_retrieval_task(queries, corpus, bad, ListBackend());
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("a/missing") != std::string::npos);
  }
}

TEST_CASE("dataset loaders") {
  oracle::TempDir dir("eval");
  {
    std::ofstream(dir / "c.jsonl") << R"({"doc_id":"x","text":"t1","label":"bio"})" "\n"
                                   << R"({"doc_id":"y","text":"t2","label":3})" "\n\n"
                                   << R"({"doc_id":"z","text":"t3","label":"bio"})" "\n";
    std::ofstream(dir / "s.jsonl") << R"({"text_a":"a","text_b":"b","score":1.5})" "\n";
    std::ofstream(dir / "r.jsonl") << R"({"_id":"1","text":"a"})" "\n" << R"({"_id":"1","text":"b"})" "\n";
    std::ofstream(dir / "q.tsv") << "query-id\tcorpus-id\tscore\nq1\td1\t2\nq1\td2\t0\r\n";
    std::ofstream(dir / "neg.tsv") << "q1\td1\t-1\n";
    std::ofstream(dir / "broken.jsonl") << "{not json\n";
  }
  const auto c = load_clustering_dataset(dir / "c.jsonl");
  CHECK(c.labels == std::vector<int>{0, 1, 0});
  CHECK(c.label_names == std::vector<std::string>{"bio", "3"});
  CHECK(load_sts_dataset(dir / "s.jsonl").scores == std::vector<double>{1.5});
  CHECK_THROWS_AS(load_records(dir / "r.jsonl"), FormatError);
  const auto q = load_qrels(dir / "q.tsv");
  CHECK(q.at("q1").at("d1") == 2);
  CHECK(q.at("q1").at("d2") == 0);
  CHECK_THROWS_AS(load_qrels(dir / "neg.tsv"), FormatError);
  CHECK_THROWS_AS(load_clustering_dataset(dir / "broken.jsonl"), FormatError);
  CHECK_THROWS_AS(load_records(dir / "absent.jsonl"), IoError);
}

TEST_CASE("report rendering") {
  EvalReport a;
  a.task = "sts";
  a.dataset = "toy.jsonl";
  a.backend = "tf-mmr";
  a.metrics = {{"spearman", 0.51234}};
  EvalReport b = a;
  b.task = "retrieval";
  b.metrics = {{"ndcg@10", 0.9}};
  const std::vector<EvalReport> both{a, b};
  const auto j = report_to_json(both);
  CHECK(j.size() == 2);
  CHECK(j[0]["metrics"]["spearman"] == 0.51234);
  const auto table = report_to_table(both);
  CHECK(table.find("0.5123") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
  // Every line has the same width (right-aligned last column).
  std::istringstream lines(table);
  std::set<std::size_t> widths;
  for (std::string line; std::getline(lines, line);) widths.insert(line.size());
  CHECK(widths.size() == 1);
  CHECK_THROWS_AS(a.metric("v_measure"), InvalidArgument);
}
