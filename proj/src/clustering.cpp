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

#include "qdim/clustering.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qdim/util.hpp"

namespace qdim {

ClusterModel::ClusterModel(RowMatrix centroids, std::vector<std::string> doc_ids, std::vector<int> assignments,
                           double inertia, std::vector<double> inertia_history)
    : centroids_(std::move(centroids)),
      doc_ids_(std::move(doc_ids)),
      assignments_(std::move(assignments)),
      inertia_(inertia),
      inertia_history_(std::move(inertia_history)) {
  if (centroids_.rows() == 0) throw InvalidArgument("cluster model needs at least one centroid");
  if (doc_ids_.size() != assignments_.size()) throw InvalidArgument("assignments not aligned with doc ids");
  if (!(inertia_ >= 0.0)) throw InvalidArgument("inertia must be non-negative");
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (assignments_[i] < 0 || assignments_[i] >= k()) {
      throw InvalidArgument("doc '" + doc_ids_[i] + "' assigned to invalid cluster " + std::to_string(assignments_[i]));
    }
    if (!by_id_.emplace(doc_ids_[i], assignments_[i]).second) {
      throw InvalidArgument("doc '" + doc_ids_[i] + "' assigned more than once");
    }
  }
}

std::optional<int> ClusterModel::cluster_of(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

void ClusterModel::check_cluster(int cluster_id) const {
  if (cluster_id < 0 || cluster_id >= k()) {
    throw InvalidArgument("invalid cluster id " + std::to_string(cluster_id) + " (K = " + std::to_string(k()) + ")");
  }
}

std::vector<std::string> ClusterModel::members(int cluster_id) const {
  check_cluster(cluster_id);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (assignments_[i] == cluster_id) out.push_back(doc_ids_[i]);
  }
  return out;
}

std::vector<std::size_t> ClusterModel::cluster_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k()), 0);
  for (int a : assignments_) ++sizes[static_cast<std::size_t>(a)];
  return sizes;
}

namespace {

RowMatrix kmeanspp_seed(const RowMatrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  RowMatrix centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform_real() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
    }
    centroids.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

ClusterModel kmeans(const VectorMatrix& corpus, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (corpus.empty()) throw InvalidArgument("kmeans: empty corpus");
  if (k < 1 || k > corpus.size()) {
    throw InvalidArgument("kmeans: K = " + std::to_string(k) + " must lie in [1, " + std::to_string(corpus.size()) + "]");
  }
  if (options.max_iter < 1) throw InvalidArgument("kmeans: max_iter must be at least 1");
  if (!(options.tol >= 0.0)) throw InvalidArgument("kmeans: tol must be non-negative");

  const RowMatrix x = options.normalize ? corpus.normalized().rows() : corpus.rows();
  const Eigen::Index n = x.rows();
  Rng rng(seed);
  RowMatrix centroids = kmeanspp_seed(x, k, rng);

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  std::vector<double> history;
  double inertia = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < options.max_iter; ++iter) {
    std::vector<int> next(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), options.workers, [&](std::size_t i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[i] = best;
      dist[i] = best_d;
    });
    double current = 0.0;
    for (double d : dist) current += d;

    const bool unchanged = next == assign;
    assign = std::move(next);
    const double improvement = inertia - current;
    inertia = current;
    history.push_back(current);
    if (unchanged || (iter > 0 && improvement < options.tol) || iter + 1 == options.max_iter) break;

    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Reseed from the point farthest from its own (updated) centroid.
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (used[i]) continue;
        const double d = (x.row(i) - centroids.row(assign[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far >= 0) {
        used[far] = true;
        centroids.row(c) = x.row(far);
      }
    }
  }
  return ClusterModel(std::move(centroids), corpus.ids(), std::move(assign), inertia, std::move(history));
}

std::vector<int> nearest_clusters(const ClusterModel& model, int cluster_id, int m) {
  model.check_cluster(cluster_id);
  if (m < 0 || m >= model.k()) {
    throw InvalidArgument("nearest_clusters: m = " + std::to_string(m) + " must be below K = " + std::to_string(model.k()));
  }
  const auto& c = model.centroids();
  const double target_norm = c.row(cluster_id).norm();
  std::vector<std::pair<double, int>> sims;
  for (int j = 0; j < model.k(); ++j) {
    if (j == cluster_id) continue;
    const double nj = c.row(j).norm();
    // A degenerate zero centroid ranks last rather than failing the query.
    const double s = (target_norm == 0.0 || nj == 0.0) ? -2.0 : cosine(c.row(cluster_id), c.row(j));
    sims.emplace_back(s, j);
  }
  std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<int> out;
  for (int i = 0; i < m; ++i) out.push_back(sims[static_cast<std::size_t>(i)].second);
  return out;
}

std::vector<std::string> ContrastiveSample::negatives() const {
  std::vector<std::string> out = hard_negatives;
  out.insert(out.end(), easy_negatives.begin(), easy_negatives.end());
  return out;
}

ContrastiveSample sample_contrastive(const ClusterModel& model, int cluster_id, const ContrastiveConfig& config,
                                     std::uint64_t seed) {
  model.check_cluster(cluster_id);
  if (config.p_pos < 0 || config.p_hard < 0 || config.p_easy < 0 || config.n_hard_clusters < 0) {
    throw InvalidArgument("sample_contrastive: counts must be non-negative");
  }
  const auto target = model.members(cluster_id);
  if (static_cast<int>(target.size()) < config.p_pos) {
    throw InvalidArgument("cluster " + std::to_string(cluster_id) + " has " + std::to_string(target.size()) +
                          " documents, fewer than p_pos = " + std::to_string(config.p_pos));
  }
  const int n_near = std::min(config.n_hard_clusters, model.k() - 1);
  const auto near = nearest_clusters(model, cluster_id, n_near);
  std::vector<bool> in_hard(static_cast<std::size_t>(model.k()), false);
  for (int c : near) in_hard[static_cast<std::size_t>(c)] = true;

  std::vector<std::string> hard_pool;
  std::vector<std::string> easy_pool;
  const auto& ids = model.doc_ids();
  const auto& assign = model.assignments();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (assign[i] == cluster_id) continue;
    (in_hard[static_cast<std::size_t>(assign[i])] ? hard_pool : easy_pool).push_back(ids[i]);
  }
  if (static_cast<int>(hard_pool.size()) < config.p_hard) {
    throw InvalidArgument("cluster " + std::to_string(cluster_id) + ": hard-negative pool has " +
                          std::to_string(hard_pool.size()) + " documents, need " + std::to_string(config.p_hard));
  }
  if (static_cast<int>(easy_pool.size()) < config.p_easy) {
    throw InvalidArgument("cluster " + std::to_string(cluster_id) + ": easy-negative pool has " +
                          std::to_string(easy_pool.size()) + " documents, need " + std::to_string(config.p_easy));
  }

  Rng rng(seed);
  ContrastiveSample s;
  s.cluster_id = cluster_id;
  s.seed = seed;
  s.positives = rng.sample<std::string>(target, static_cast<std::size_t>(config.p_pos));
  s.hard_negatives = rng.sample<std::string>(hard_pool, static_cast<std::size_t>(config.p_hard));
  s.easy_negatives = rng.sample<std::string>(easy_pool, static_cast<std::size_t>(config.p_easy));
  return s;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& centroids_path,
                        const std::filesystem::path& assignments_path) {
  std::vector<std::string> ids;
  for (int c = 0; c < model.k(); ++c) ids.push_back(std::to_string(c));
  save_matrix(VectorMatrix(std::move(ids), model.centroids()), centroids_path);
  std::string out;
  for (std::size_t i = 0; i < model.doc_ids().size(); ++i) {
    nlohmann::ordered_json line;
    line["doc_id"] = model.doc_ids()[i];
    line["cluster"] = model.assignments()[i];
    out += line.dump() + "\n";
  }
  write_file(assignments_path, out);
}

ClusterModel load_cluster_model(const std::filesystem::path& centroids_path,
                                const std::filesystem::path& assignments_path) {
  const auto centroids = load_matrix(centroids_path);
  for (Eigen::Index c = 0; c < centroids.size(); ++c) {
    if (centroids.ids()[c] != std::to_string(c)) throw FormatError("centroid ids must be 0..K-1 in order");
  }
  std::ifstream in(assignments_path);
  if (!in) throw IoError("cannot open '" + assignments_path.string() + "'");
  std::vector<std::string> ids;
  std::vector<int> assign;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      ids.push_back(obj.at("doc_id").get<std::string>());
      assign.push_back(obj.at("cluster").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(assignments_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    return ClusterModel(centroids.rows(), std::move(ids), std::move(assign), 0.0);
  } catch (const InvalidArgument& e) {
    throw FormatError(assignments_path.string() + ": " + e.what());
  }
}

}  // namespace qdim
