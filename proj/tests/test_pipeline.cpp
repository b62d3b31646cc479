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

#include <json.hpp>

#include "qdim/pipeline.hpp"
#include "qdim/synthetic.hpp"
#include "qdim/util.hpp"
#include "oracles.hpp"

using namespace qdim;

namespace {

SyntheticOptions small_options() {
  SyntheticOptions o;
  o.topics = 4;
  o.docs_per_topic = 40;
  o.keywords_per_topic = 24;
  o.sts_pairs = 20;
  return o;
}

/// Writes the small fixture plus its config into dir and loads it back.
PipelineConfig small_run(const std::filesystem::path& dir, const std::string& output = "work") {
  const auto opts = small_options();
  write_synthetic_corpus(make_synthetic_corpus(opts), dir);
  auto cfg = synthetic_config(opts);
  cfg.paths.output_dir = output;
  std::ofstream(dir / "qdim.toml") << render_config_toml(cfg);
  return load_config(dir / "qdim.toml");
}

std::vector<nlohmann::json> jsonl(const std::filesystem::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

void rewrite_first_field(const std::filesystem::path& p, const std::string& field, const std::string& value) {
  auto rows = jsonl(p);
  rows.at(0)[field] = value;
  std::ofstream out(p);
  for (const auto& r : rows) out << r.dump() << "\n";
}

}  // namespace

TEST_CASE("end-to-end run on the small synthetic fixture") {
  oracle::TempDir dir("pipeline");
  const auto cfg = small_run(dir.path);
  const auto table = run_all(cfg);
  const auto a = artifacts(cfg);
  for (const std::filesystem::path& p : {a.centroids, a.assignments, a.signatures, a.candidates, a.probes, a.bank, a.bank_vectors,
                        a.embeddings, a.report_json, a.report_text}) {
    CHECK_MESSAGE(std::filesystem::exists(p), p.string());
  }
  CHECK_FALSE(std::filesystem::exists(a.heads));  // tf-mmr needs no heads
  CHECK(table == read_file(a.report_text));

  const auto report = nlohmann::json::parse(read_file(a.report_json));
  std::set<std::string> tasks;
  for (const auto& r : report) {
    tasks.insert(r["task"].get<std::string>());
    for (const auto& [name, v] : r["metrics"].items()) {
      const double x = v.get<double>();
      CHECK((x >= -1.0 && x <= 1.0));
      if (name != "spearman") CHECK(x >= 0.0);
    }
    CHECK(r["config"]["pipeline"]["embed"]["method"] == "tf-mmr");
    CHECK(r["config"]["pipeline"].dump().find("output_dir") == std::string::npos);
  }
  CHECK(tasks == std::set<std::string>{"clustering", "sts", "retrieval"});

  const auto bank = nlohmann::json::parse(read_file(a.bank));
  const auto m = static_cast<int>(bank["questions"].size());
  REQUIRE(m > 0);
  const auto emb = jsonl(a.embeddings);
  CHECK(emb.size() == 160);
  for (const auto& e : emb) CHECK(static_cast<int>(e["active"].size()) == std::min(cfg.embed.k, m));

  const auto why = stage_explain(cfg, emb[0]["doc_id"].get<std::string>(), 3);
  CHECK(why.rfind("document ", 0) == 0);
  CHECK(std::count(why.begin(), why.end(), '\n') == 5);  // title, header, three rows
  CHECK_THROWS_AS(stage_explain(cfg, "no-such-doc", 3), InvalidArgument);
}

TEST_CASE("reruns are byte-identical and independent of worker count") {
  oracle::TempDir dir("pipeline_det");
  auto cfg = small_run(dir.path, "one");
  run_all(cfg);
  auto cfg2 = cfg;
  cfg2.paths.output_dir = dir / "two";
  cfg2.workers = 4;
  run_all(cfg2);
  const auto a = artifacts(cfg), b = artifacts(cfg2);
  for (auto [x, y] : {std::pair{a.assignments, b.assignments}, {a.candidates, b.candidates}, {a.probes, b.probes},
                      {a.bank, b.bank}, {a.embeddings, b.embeddings}, {a.report_json, b.report_json}}) {
    CHECK_MESSAGE(read_file(x) == read_file(y), x.filename().string());
  }
}

TEST_CASE("stages refuse inputs from a different upstream run") {
  oracle::TempDir dir("pipeline_chain");
  const auto cfg = small_run(dir.path);
  const auto a = artifacts(cfg);
  CHECK_THROWS_AS(stage_cluster(cfg), IoError);  // vectors not encoded yet
  stage_encode(cfg);
  stage_cluster(cfg);
  stage_signatures(cfg);
  stage_genq(cfg);

  const auto candidates = read_file(a.candidates);
  rewrite_first_field(a.candidates, "assignments_sha256", std::string(64, '0'));
  CHECK_THROWS_AS(stage_probe(cfg), FormatError);
  std::ofstream(a.candidates) << candidates;
  stage_probe(cfg);

  const auto probes = read_file(a.probes);
  rewrite_first_field(a.probes, "candidates_sha256", std::string(64, '0'));
  CHECK_THROWS_AS(stage_filter(cfg), FormatError);
  std::ofstream(a.probes) << probes;
  stage_filter(cfg);

  // Heads trained against one bank cannot embed with another.
  auto cls = cfg;
  cls.embed.method = EmbedMethod::classifier;
  cls.classifier.train.epochs = 20;
  stage_train_heads(cls);
  auto tighter = cls;
  tighter.filter.quota_base = tighter.filter.quota_lo = tighter.filter.quota_hi = 1;
  stage_filter(tighter);
  CHECK_THROWS_AS(stage_embed(tighter), FormatError);
  stage_train_heads(tighter);
  CHECK_NOTHROW(stage_embed(tighter));
  for (const auto& e : jsonl(a.embeddings)) CHECK(e["k"].get<int>() == static_cast<int>(e["active"].size()));

  // Embeddings from a replaced bank are rejected by explain.
  stage_filter(cfg);
  CHECK_THROWS(stage_explain(cfg, jsonl(a.embeddings)[0]["doc_id"].get<std::string>(), 2));
}

TEST_CASE("config snapshot excludes locations and secrets") {
  PipelineConfig c;
  c.paths.corpus = "/somewhere/else.jsonl";
  c.provider.endpoint = "http://internal:9/v1";
  const auto s = config_snapshot(c).dump();
  CHECK(s.find("somewhere") == std::string::npos);
  CHECK(s.find("internal") == std::string::npos);
  CHECK(s.find("api_key") == std::string::npos);
  CHECK(s.find("\"k\":256") != std::string::npos);
}
