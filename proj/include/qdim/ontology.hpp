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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdim/clustering.hpp"

namespace qdim {

struct EntityAnnotation {
  std::string doc_id;
  std::string surface;
  std::string cui;
  std::string name;
  std::optional<std::string> description;
};

struct AnnotationSet {
  std::vector<EntityAnnotation> annotations;
  /// Lines that failed to parse or lacked a required field.
  std::size_t skipped = 0;
};

/// JSONL, one annotation per line: doc_id, surface, cui, name, description?
/// Malformed lines are skipped and counted; an unreadable file throws.
AnnotationSet load_annotations(const std::filesystem::path& path);

struct ConceptInfo {
  std::string name;
  std::optional<std::string> description;
};

/// cui -> name/description, from JSONL lines {cui, name, description}.
using ConceptDictionary = std::map<std::string, ConceptInfo>;
ConceptDictionary load_concept_dictionary(const std::filesystem::path& path);

struct ConceptCount {
  std::string cui;
  int count = 0;
  std::string name;
  std::optional<std::string> description;

  bool operator==(const ConceptCount&) const = default;
};

/// Concepts of one cluster, sorted by count descending then cui ascending.
struct ConceptSignature {
  int cluster_id = 0;
  std::vector<ConceptCount> concepts;

  bool operator==(const ConceptSignature&) const = default;
};

/// Counts mentions of each cui over documents assigned to the cluster and keeps
/// the top_n. Names and descriptions prefer the dictionary; otherwise the
/// lexicographically smallest annotation value wins so the result does not
/// depend on input order. Annotations for unknown doc ids are skipped and
/// added to *unknown_docs when given.
ConceptSignature build_signature(const ClusterModel& model, int cluster_id,
                                 std::span<const EntityAnnotation> annotations, int top_n,
                                 const ConceptDictionary* dictionary = nullptr,
                                 std::size_t* unknown_docs = nullptr);

/// One signature per cluster in a single pass over the annotations.
std::vector<ConceptSignature> build_all_signatures(const ClusterModel& model,
                                                   std::span<const EntityAnnotation> annotations, int top_n,
                                                   const ConceptDictionary* dictionary = nullptr,
                                                   std::size_t* unknown_docs = nullptr);

/// One line per concept: "CUI (name): description", or "CUI (name)" without a
/// description. Empty signature renders as an empty string.
std::string render_signature(const ConceptSignature& signature);

void save_signatures(std::span<const ConceptSignature> signatures, const std::filesystem::path& path);
std::vector<ConceptSignature> load_signatures(const std::filesystem::path& path);

}  // namespace qdim
