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
#include <string>
#include <vector>

#include "qdim/config.hpp"
#include "qdim/provider.hpp"

namespace qdim {

/// File layout of one run below config.paths.output_dir.
struct Artifacts {
  std::filesystem::path centroids;
  std::filesystem::path assignments;
  std::filesystem::path signatures;
  std::filesystem::path candidates;
  std::filesystem::path probes;
  std::filesystem::path bank;
  std::filesystem::path bank_vectors;
  std::filesystem::path heads;
  std::filesystem::path embeddings;
  std::filesystem::path report_json;
  std::filesystem::path report_text;
};

Artifacts artifacts(const PipelineConfig& config);

std::shared_ptr<const TextEncoder> make_encoder(const PipelineConfig& config);
std::shared_ptr<const GenerationProvider> make_provider(const PipelineConfig& config);

/// Hyperparameters only (no paths or endpoints), so that snapshots embedded
/// in artifacts do not depend on where a run happens.
nlohmann::ordered_json config_snapshot(const PipelineConfig& config);

/// Encodes config.paths.corpus with the configured encoder into paths.vectors.
void stage_encode(const PipelineConfig& config, const TextEncoder* encoder = nullptr);
/// Converts a JSONL {"id","vector"} file into paths.vectors.
void stage_import(const PipelineConfig& config, const std::filesystem::path& jsonl);
void stage_cluster(const PipelineConfig& config);
void stage_signatures(const PipelineConfig& config);
void stage_genq(const PipelineConfig& config, const GenerationProvider* provider = nullptr);
void stage_probe(const PipelineConfig& config, const GenerationProvider* provider = nullptr);
void stage_filter(const PipelineConfig& config, const TextEncoder* encoder = nullptr);
void stage_train_heads(const PipelineConfig& config);
void stage_embed(const PipelineConfig& config);

/// task is "all" (every task whose dataset file exists), "clustering", "sts"
/// or "retrieval". Returns the rendered metric table.
std::string stage_eval(const PipelineConfig& config, const std::string& task = "all",
                       const TextEncoder* encoder = nullptr);
std::string stage_explain(const PipelineConfig& config, const std::string& doc_id, int top_m);

/// encode -> cluster -> signatures -> genq -> probe -> filter
/// [-> train-heads] -> embed -> eval.
std::string run_all(const PipelineConfig& config);

}  // namespace qdim
