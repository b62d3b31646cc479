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
#include <string>
#include <vector>

#include "qdim/config.hpp"
#include "qdim/eval.hpp"
#include "qdim/ontology.hpp"

namespace qdim {

/// Shape of the planted-topic fixture. Each topic owns a keyword vocabulary;
/// documents mix keywords of their topic with shared filler words.
struct SyntheticOptions {
  int topics = 8;
  int docs_per_topic = 100;
  int keywords_per_topic = 60;
  int fillers = 40;
  int keywords_per_doc = 8;
  int fillers_per_doc = 6;
  /// Chance that a document also mentions one keyword of another topic.
  double cross_topic_noise = 0.3;
  int queries_per_topic = 2;
  int planted_docs_per_query = 3;
  int query_keywords = 4;
  int planted_repeat = 2;  // occurrences of each query keyword in its planted docs
  int sts_pairs = 40;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  /// Topic keywords (topic-major) followed by fillers; the keyword encoder vocabulary.
  std::vector<std::string> vocabulary;
  std::vector<std::vector<std::string>> topic_keywords;
  std::vector<std::string> topic_names;
  std::vector<TextRecord> documents;
  std::vector<int> topic_of_doc;
  std::vector<EntityAnnotation> annotations;
  ConceptDictionary concepts;
  std::vector<TextRecord> queries;
  Qrels qrels;
  StsDataset sts;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options = {});

/// Writes corpus.jsonl, clustering.jsonl, annotations.jsonl, concepts.jsonl,
/// vocab.txt, queries.jsonl, qrels.tsv and sts.jsonl into `dir`.
/// Pipeline settings tuned for the synthetic corpus: enough generation
/// clusters per topic that most topic keywords get a question, and k near the
/// number of keywords in one document. Paths are relative to the corpus dir.
PipelineConfig synthetic_config(const SyntheticOptions& options = {});

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace qdim
