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
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qdim/clustering.hpp"
#include "qdim/embedding.hpp"
#include "qdim/eval.hpp"

namespace qdim {

/// Every tunable of a pipeline run. Defaults follow the reference
/// hyperparameters (K = 2500, k = 256, lambda = 0.7, theta = 0.8, p = 5/3/2).
struct PipelineConfig {
  std::uint64_t seed = 13;
  std::size_t workers = 1;

  struct Paths {
    std::filesystem::path corpus = "corpus.jsonl";
    std::filesystem::path vectors = "corpus.qvm";
    std::filesystem::path annotations = "annotations.jsonl";
    std::filesystem::path concepts;  // optional dictionary
    std::filesystem::path output_dir = "work";
  } paths;

  struct Encoder {
    std::string kind = "keyword";  // keyword | http
    std::filesystem::path vocabulary = "vocab.txt";
    std::string endpoint;
    std::string model;
    int dim = 0;
    int batch_size = 64;
  } encoder;

  struct Provider {
    std::string kind = "mock";  // mock | http
    std::string endpoint = "http://localhost:8000/v1";
    std::string model = "generator";
    std::string api_key_env = "QDIM_API_KEY";
    double temperature = 0.0;
    int max_tokens = 512;
    int max_retries = 3;
  } provider;

  struct Cluster {
    int k = 2500;
    int max_iter = 100;
    double tol = 1e-9;
  } cluster;

  struct Generation {
    ContrastiveConfig sampling;
    int n_questions = 10;
    int top_n_concepts = 10;
    std::filesystem::path prompt_template;  // optional; built-in text when empty
  } generation;

  struct Filter {
    double theta = 0.8;
    int quota_base = 4;
    int quota_lo = 2;
    int quota_hi = 20;
  } filter;

  EmbedSettings embed;

  struct Classifier {
    ClassifierCounts counts;
    TrainOptions train;
  } classifier;

  struct Eval {
    std::filesystem::path clustering = "clustering.jsonl";
    std::filesystem::path sts = "sts.jsonl";
    std::filesystem::path queries = "queries.jsonl";
    std::filesystem::path retrieval_corpus = "corpus.jsonl";
    std::filesystem::path qrels = "qrels.tsv";
    int ndcg_k = 10;
    Gain gain = Gain::linear;
  } eval;

  /// Throws InvalidArgument naming the first out-of-range setting.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

/// Applies one "section.key" = value setting (value in TOML literal syntax:
/// quoted string, integer, float or boolean). Unknown keys throw.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});

/// Parses a TOML-style file (tables, key = value, comments). Relative paths
/// resolve against the file's directory.
PipelineConfig load_config(const std::filesystem::path& path);
/// Same as load_config but from text; paths resolve against base_dir.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

std::string render_config_toml(const PipelineConfig& config);

}  // namespace qdim
