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

#include "qdim/synthetic.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qdim/util.hpp"

namespace qdim {

namespace {

constexpr const char* kFillers[] = {
    "study",    "patients", "results",   "analysis", "group",     "clinical", "data",     "level",
    "effect",   "method",   "report",    "sample",   "cohort",    "outcome",  "baseline", "review",
    "measure",  "factor",   "response",  "change",   "increase",  "decrease", "finding",  "evidence",
    "period",   "control",  "treatment", "subjects", "protocol",  "trial",    "observed", "compared",
    "associated", "significant", "model", "rate",    "follow",    "years",    "total",    "overall",
    "higher",   "lower",    "present",   "case",     "series",    "primary",  "secondary", "common"};

std::string pseudo_word(Rng& rng) {
  static constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                            "br", "cl", "dr", "gr", "pl", "st", "tr"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "io"};
  static constexpr const char* kCodas[] = {"n", "r", "s", "x", "l", "m", "in", "ol", "ex", "yn"};
  std::string w;
  const std::size_t syllables = 2 + rng.uniform_index(2);
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.uniform_index(std::size(kOnsets))];
    w += kVowels[rng.uniform_index(std::size(kVowels))];
  }
  w += kCodas[rng.uniform_index(std::size(kCodas))];
  return w;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out + ".";
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.topics < 1 || o.docs_per_topic < 1 || o.keywords_per_topic < o.keywords_per_doc ||
      o.fillers > static_cast<int>(std::size(kFillers)) || o.fillers < o.fillers_per_doc ||
      o.query_keywords > o.keywords_per_doc ||
      o.queries_per_topic * o.planted_docs_per_query > o.docs_per_topic ||
      o.queries_per_topic * o.query_keywords > o.keywords_per_topic) {
    throw InvalidArgument("inconsistent synthetic corpus options");
  }
  Rng rng(o.seed);
  SyntheticCorpus c;
  std::set<std::string> used(std::begin(kFillers), std::end(kFillers));
  for (int t = 0; t < o.topics; ++t) {
    c.topic_names.push_back("topic" + std::to_string(t));
    std::vector<std::string> kws;
    while (static_cast<int>(kws.size()) < o.keywords_per_topic) {
      auto w = pseudo_word(rng);
      if (used.insert(w).second) kws.push_back(std::move(w));
    }
    c.vocabulary.insert(c.vocabulary.end(), kws.begin(), kws.end());
    c.topic_keywords.push_back(std::move(kws));
  }
  const std::vector<std::string> fillers(std::begin(kFillers), std::begin(kFillers) + o.fillers);
  c.vocabulary.insert(c.vocabulary.end(), fillers.begin(), fillers.end());

  for (int t = 0; t < o.topics; ++t) {
    for (std::size_t i = 0; i < c.topic_keywords[t].size(); ++i) {
      std::ostringstream cui;
      cui << "C" << std::setw(7) << std::setfill('0') << (t * 1000 + static_cast<int>(i) + 1);
      c.concepts[cui.str()] = ConceptInfo{c.topic_keywords[t][i], "synthetic concept of " + c.topic_names[t]};
    }
  }
  auto cui_of = [&](int topic, const std::string& kw) {
    const auto& kws = c.topic_keywords[static_cast<std::size_t>(topic)];
    const auto i = static_cast<int>(std::find(kws.begin(), kws.end(), kw) - kws.begin());
    std::ostringstream cui;
    cui << "C" << std::setw(7) << std::setfill('0') << (topic * 1000 + i + 1);
    return cui.str();
  };

  // Query keyword sets, disjoint within a topic.
  std::vector<std::vector<std::vector<std::string>>> query_kws(static_cast<std::size_t>(o.topics));
  for (int t = 0; t < o.topics; ++t) {
    const auto picked = rng.sample<std::string>(c.topic_keywords[t],
                                                static_cast<std::size_t>(o.queries_per_topic * o.query_keywords));
    for (int q = 0; q < o.queries_per_topic; ++q) {
      query_kws[t].emplace_back(picked.begin() + q * o.query_keywords, picked.begin() + (q + 1) * o.query_keywords);
    }
  }

  for (int t = 0; t < o.topics; ++t) {
    for (int d = 0; d < o.docs_per_topic; ++d) {
      std::ostringstream id;
      id << "d" << t << "_" << std::setw(3) << std::setfill('0') << d;
      const int planted_query = d / o.planted_docs_per_query;
      std::vector<std::pair<int, std::string>> kws;  // (topic, keyword)
      std::set<std::string> chosen;
      if (planted_query < o.queries_per_topic) {
        for (const auto& kw : query_kws[t][static_cast<std::size_t>(planted_query)]) {
          kws.emplace_back(t, kw);
          chosen.insert(kw);
        }
      }
      while (static_cast<int>(kws.size()) < o.keywords_per_doc) {
        const auto& kw = c.topic_keywords[t][rng.uniform_index(c.topic_keywords[t].size())];
        if (chosen.insert(kw).second) kws.emplace_back(t, kw);
      }
      if (o.topics > 1 && rng.uniform_real() < o.cross_topic_noise) {
        int other = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(o.topics - 1)));
        if (other >= t) ++other;
        const auto& kw = c.topic_keywords[other][rng.uniform_index(c.topic_keywords[other].size())];
        kws.emplace_back(other, kw);
      }
      std::vector<std::string> words;
      for (std::size_t i = 0; i < kws.size(); ++i) {
        const auto& [topic, kw] = kws[i];
        const bool planted = planted_query < o.queries_per_topic && static_cast<int>(i) < o.query_keywords;
        for (int r = 0; r < (planted ? o.planted_repeat : 1); ++r) words.push_back(kw);
        c.annotations.push_back({id.str(), kw, cui_of(topic, kw), kw, std::nullopt});
      }
      for (const auto& f : rng.sample<std::string>(fillers, static_cast<std::size_t>(o.fillers_per_doc))) words.push_back(f);
      for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.uniform_index(i)]);
      c.documents.push_back({id.str(), join(words)});
      c.topic_of_doc.push_back(t);
    }
  }

  for (int t = 0; t < o.topics; ++t) {
    for (int q = 0; q < o.queries_per_topic; ++q) {
      const auto qid = "q" + std::to_string(t) + "_" + std::to_string(q);
      c.queries.push_back({qid, join(query_kws[t][static_cast<std::size_t>(q)])});
      for (int d = 0; d < o.planted_docs_per_query; ++d) {
        std::ostringstream id;
        id << "d" << t << "_" << std::setw(3) << std::setfill('0') << (q * o.planted_docs_per_query + d);
        c.qrels[qid][id.str()] = 1;
      }
    }
  }

  // Pair relatedness = number of shared keywords (0..4) within one topic.
  for (int p = 0; p < o.sts_pairs; ++p) {
    const int t = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(o.topics)));
    const int shared = p % 5;
    const auto pool = rng.sample<std::string>(c.topic_keywords[t], 10);
    std::vector<std::string> a(pool.begin(), pool.begin() + 5);
    std::vector<std::string> b(pool.begin(), pool.begin() + shared);
    int other = (t + 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(std::max(o.topics - 1, 1))))) % o.topics;
    if (o.topics == 1) other = t;
    const auto extra = rng.sample<std::string>(c.topic_keywords[other], 10);
    for (const auto& kw : extra) {
      if (static_cast<int>(b.size()) == 5) break;
      if (std::find(a.begin(), a.end(), kw) == a.end()) b.push_back(kw);
    }
    c.sts.pairs.emplace_back(join(a), join(b));
    c.sts.scores.push_back(static_cast<double>(shared));
  }
  return c;
}

PipelineConfig synthetic_config(const SyntheticOptions& options) {
  PipelineConfig cfg;
  cfg.paths.concepts = "concepts.jsonl";
  cfg.cluster.k = options.topics * 8;
  cfg.generation.top_n_concepts = options.keywords_per_topic;
  cfg.generation.n_questions = 40;
  cfg.filter.quota_base = 16;
  cfg.filter.quota_hi = 40;
  cfg.embed.k = options.keywords_per_doc;
  cfg.classifier.counts = {40, 60, 40, 3};
  return cfg;
}

void write_synthetic_corpus(const SyntheticCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string corpus, clustering, annotations, concepts, vocab, queries, qrels, sts;
  for (std::size_t i = 0; i < c.documents.size(); ++i) {
    nlohmann::ordered_json d;
    d["id"] = c.documents[i].id;
    d["text"] = c.documents[i].text;
    corpus += d.dump() + "\n";
    nlohmann::ordered_json l;
    l["doc_id"] = c.documents[i].id;
    l["text"] = c.documents[i].text;
    l["label"] = c.topic_names[static_cast<std::size_t>(c.topic_of_doc[i])];
    clustering += l.dump() + "\n";
  }
  for (const auto& a : c.annotations) {
    nlohmann::ordered_json j;
    j["doc_id"] = a.doc_id;
    j["surface"] = a.surface;
    j["cui"] = a.cui;
    j["name"] = a.name;
    annotations += j.dump() + "\n";
  }
  for (const auto& [cui, info] : c.concepts) {
    nlohmann::ordered_json j;
    j["cui"] = cui;
    j["name"] = info.name;
    if (info.description) j["description"] = *info.description;
    concepts += j.dump() + "\n";
  }
  std::map<std::string, std::string> topic_of_word;
  for (std::size_t t = 0; t < c.topic_keywords.size(); ++t) {
    for (const auto& w : c.topic_keywords[t]) topic_of_word[w] = c.topic_names[t];
  }
  for (const auto& w : c.vocabulary) {
    auto it = topic_of_word.find(w);
    vocab += it == topic_of_word.end() ? w + "\n" : w + " " + it->second + "\n";
  }
  for (const auto& q : c.queries) {
    nlohmann::ordered_json j;
    j["id"] = q.id;
    j["text"] = q.text;
    queries += j.dump() + "\n";
  }
  qrels = "query_id\tdoc_id\tgrade\n";
  for (const auto& [qid, row] : c.qrels) {
    for (const auto& [did, grade] : row) qrels += qid + "\t" + did + "\t" + std::to_string(grade) + "\n";
  }
  for (std::size_t i = 0; i < c.sts.pairs.size(); ++i) {
    nlohmann::ordered_json j;
    j["text_a"] = c.sts.pairs[i].first;
    j["text_b"] = c.sts.pairs[i].second;
    j["score"] = c.sts.scores[i];
    sts += j.dump() + "\n";
  }
  write_file(dir / "corpus.jsonl", corpus);
  write_file(dir / "clustering.jsonl", clustering);
  write_file(dir / "annotations.jsonl", annotations);
  write_file(dir / "concepts.jsonl", concepts);
  write_file(dir / "vocab.txt", vocab);
  write_file(dir / "queries.jsonl", queries);
  write_file(dir / "qrels.tsv", qrels);
  write_file(dir / "sts.jsonl", sts);
}

}  // namespace qdim
