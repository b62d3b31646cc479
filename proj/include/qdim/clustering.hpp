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
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qdim/vectors.hpp"

namespace qdim {

/// Partition of a corpus into K clusters. Centroids live in the space the
/// clustering ran in (unit-normalized rows unless normalization was off).
class ClusterModel {
public:
  ClusterModel() = default;
  ClusterModel(RowMatrix centroids, std::vector<std::string> doc_ids, std::vector<int> assignments,
               double inertia, std::vector<double> inertia_history = {});

  int k() const { return static_cast<int>(centroids_.rows()); }
  Eigen::Index dim() const { return centroids_.cols(); }
  const RowMatrix& centroids() const { return centroids_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<int>& assignments() const { return assignments_; }
  double inertia() const { return inertia_; }
  /// Inertia after each assignment step, in iteration order.
  const std::vector<double>& inertia_history() const { return inertia_history_; }

  std::optional<int> cluster_of(std::string_view doc_id) const;
  /// Member doc ids of a cluster, in corpus order.
  std::vector<std::string> members(int cluster_id) const;
  std::vector<std::size_t> cluster_sizes() const;
  void check_cluster(int cluster_id) const;

private:
  RowMatrix centroids_;
  std::vector<std::string> doc_ids_;
  std::vector<int> assignments_;
  double inertia_ = 0.0;
  std::vector<double> inertia_history_;
  std::unordered_map<std::string, int> by_id_;
};

struct KMeansOptions {
  int max_iter = 100;
  double tol = 1e-9;
  /// Cluster unit-normalized rows (squared Euclidean is then monotone in cosine).
  bool normalize = true;
  std::size_t workers = 1;
};

/// Lloyd iterations from k-means++ seeding. Deterministic for a fixed seed;
/// the assignment step may run on several workers without changing results.
ClusterModel kmeans(const VectorMatrix& corpus, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// The m clusters whose centroids have the highest cosine to the target
/// centroid, descending, ties by lower index. Requires m < K.
std::vector<int> nearest_clusters(const ClusterModel& model, int cluster_id, int m);

struct ContrastiveConfig {
  int p_pos = 5;
  int p_hard = 3;
  int p_easy = 2;
  int n_hard_clusters = 3;
};

struct ContrastiveSample {
  int cluster_id = 0;
  std::vector<std::string> positives;
  std::vector<std::string> hard_negatives;
  std::vector<std::string> easy_negatives;
  std::uint64_t seed = 0;

  /// Hard negatives followed by easy negatives.
  std::vector<std::string> negatives() const;
};

ContrastiveSample sample_contrastive(const ClusterModel& model, int cluster_id, const ContrastiveConfig& config,
                                     std::uint64_t seed);

/// Centroids go to a vector-matrix file (ids "0".."K-1"); assignments to JSONL
/// lines {"doc_id": ..., "cluster": ...}. Inertia is not persisted.
void save_cluster_model(const ClusterModel& model, const std::filesystem::path& centroids_path,
                        const std::filesystem::path& assignments_path);
ClusterModel load_cluster_model(const std::filesystem::path& centroids_path,
                                const std::filesystem::path& assignments_path);

}  // namespace qdim
