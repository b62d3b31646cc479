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

#include "qdim/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "qdim/log.hpp"
#include "qdim/util.hpp"

namespace qdim {

namespace {

std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  auto s = it->get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

struct Tally {
  int count = 0;
  std::string name;
  std::optional<std::string> description;
};

void merge_min(std::string& slot, const std::string& value) {
  if (!value.empty() && (slot.empty() || value < slot)) slot = value;
}

void merge_min(std::optional<std::string>& slot, const std::optional<std::string>& value) {
  if (value && (!slot || *value < *slot)) slot = value;
}

ConceptSignature finish(int cluster_id, const std::unordered_map<std::string, Tally>& tallies, int top_n,
                        const ConceptDictionary* dictionary) {
  ConceptSignature sig;
  sig.cluster_id = cluster_id;
  for (const auto& [cui, t] : tallies) {
    ConceptCount c{cui, t.count, t.name, t.description};
    if (dictionary) {
      if (auto it = dictionary->find(cui); it != dictionary->end()) {
        if (!it->second.name.empty()) c.name = it->second.name;
        if (it->second.description) c.description = it->second.description;
      }
    }
    sig.concepts.push_back(std::move(c));
  }
  std::sort(sig.concepts.begin(), sig.concepts.end(), [](const ConceptCount& a, const ConceptCount& b) {
    return a.count != b.count ? a.count > b.count : a.cui < b.cui;
  });
  if (static_cast<int>(sig.concepts.size()) > top_n) sig.concepts.resize(static_cast<std::size_t>(top_n));
  return sig;
}

}  // namespace

AnnotationSet load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations '" + path.string() + "'");
  AnnotationSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      EntityAnnotation a;
      a.doc_id = obj.at("doc_id").get<std::string>();
      a.cui = obj.at("cui").get<std::string>();
      a.surface = obj.value("surface", std::string{});
      a.name = obj.value("name", std::string{});
      a.description = optional_string(obj, "description");
      if (a.cui.empty() || a.doc_id.empty()) {
        ++out.skipped;
        continue;
      }
      out.annotations.push_back(std::move(a));
    } catch (const nlohmann::json::exception&) {
      ++out.skipped;
    }
  }
  if (out.skipped > 0) {
    log::warn(path.string() + ": skipped " + std::to_string(out.skipped) + " malformed annotation lines");
  }
  return out;
}

ConceptDictionary load_concept_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open concept dictionary '" + path.string() + "'");
  ConceptDictionary dict;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      dict[obj.at("cui").get<std::string>()] = ConceptInfo{obj.value("name", std::string{}),
                                                            optional_string(obj, "description")};
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dict;
}

ConceptSignature build_signature(const ClusterModel& model, int cluster_id,
                                 std::span<const EntityAnnotation> annotations, int top_n,
                                 const ConceptDictionary* dictionary, std::size_t* unknown_docs) {
  model.check_cluster(cluster_id);
  if (top_n < 1) throw InvalidArgument("build_signature: top_n must be at least 1");
  std::unordered_map<std::string, Tally> tallies;
  for (const auto& a : annotations) {
    const auto c = model.cluster_of(a.doc_id);
    if (!c) {
      if (unknown_docs) ++*unknown_docs;
      continue;
    }
    if (*c != cluster_id) continue;
    auto& t = tallies[a.cui];
    ++t.count;
    merge_min(t.name, a.name);
    merge_min(t.description, a.description);
  }
  return finish(cluster_id, tallies, top_n, dictionary);
}

std::vector<ConceptSignature> build_all_signatures(const ClusterModel& model,
                                                   std::span<const EntityAnnotation> annotations, int top_n,
                                                   const ConceptDictionary* dictionary, std::size_t* unknown_docs) {
  if (top_n < 1) throw InvalidArgument("build_signature: top_n must be at least 1");
  std::vector<std::unordered_map<std::string, Tally>> tallies(static_cast<std::size_t>(model.k()));
  std::size_t unknown = 0;
  for (const auto& a : annotations) {
    const auto c = model.cluster_of(a.doc_id);
    if (!c) {
      ++unknown;
      continue;
    }
    auto& t = tallies[static_cast<std::size_t>(*c)][a.cui];
    ++t.count;
    merge_min(t.name, a.name);
    merge_min(t.description, a.description);
  }
  if (unknown > 0) log::warn("skipped " + std::to_string(unknown) + " annotations with unknown doc ids");
  if (unknown_docs) *unknown_docs += unknown;
  std::vector<ConceptSignature> out;
  for (int c = 0; c < model.k(); ++c) out.push_back(finish(c, tallies[static_cast<std::size_t>(c)], top_n, dictionary));
  return out;
}

std::string render_signature(const ConceptSignature& signature) {
  std::string out;
  for (const auto& c : signature.concepts) {
    if (!out.empty()) out += '\n';
    out += c.cui;
    if (!c.name.empty()) out += " (" + c.name + ")";
    if (c.description) out += ": " + *c.description;
  }
  return out;
}

void save_signatures(std::span<const ConceptSignature> signatures, const std::filesystem::path& path) {
  std::string out;
  for (const auto& sig : signatures) {
    nlohmann::ordered_json line;
    line["cluster_id"] = sig.cluster_id;
    auto concepts = nlohmann::ordered_json::array();
    for (const auto& c : sig.concepts) {
      nlohmann::ordered_json e;
      e["cui"] = c.cui;
      e["count"] = c.count;
      e["name"] = c.name;
      if (c.description) e["description"] = *c.description;
      concepts.push_back(std::move(e));
    }
    line["concepts"] = std::move(concepts);
    out += line.dump() + "\n";
  }
  write_file(path, out);
}

std::vector<ConceptSignature> load_signatures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<ConceptSignature> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      ConceptSignature sig;
      sig.cluster_id = obj.at("cluster_id").get<int>();
      for (const auto& e : obj.at("concepts")) {
        sig.concepts.push_back(ConceptCount{e.at("cui").get<std::string>(), e.at("count").get<int>(),
                                            e.value("name", std::string{}), optional_string(e, "description")});
      }
      out.push_back(std::move(sig));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace qdim
