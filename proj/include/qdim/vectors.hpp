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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qdim/error.hpp"

namespace qdim {

using DenseVector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, std::string_view what = "vector") {
  if (!v.allFinite()) {
    throw InvalidArgument(std::string(what) + " contains NaN or Inf");
  }
}

/// Cosine similarity clamped to [-1, 1]. Throws on dimension mismatch or a
/// zero-norm argument (the message names which one).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw InvalidArgument("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0)) throw InvalidArgument("cosine: first argument has zero norm");
  if (nb == Scalar(0)) throw InvalidArgument("cosine: second argument has zero norm");
  const Scalar c = a.dot(b.template cast<Scalar>()) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Derived>
typename Derived::PlainObject l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  const auto n = v.norm();
  if (n == 0) throw InvalidArgument("l2_normalize: zero-norm vector");
  return v / n;
}

/// Id-aligned batch of equal-dimension vectors. Immutable after construction.
class VectorMatrix {
public:
  VectorMatrix() = default;
  explicit VectorMatrix(Eigen::Index dim);
  VectorMatrix(std::vector<std::string> ids, RowMatrix rows);

  static VectorMatrix from_rows(std::vector<std::string> ids, const std::vector<DenseVector>& rows,
                                Eigen::Index dim);

  Eigen::Index dim() const { return dim_; }
  Eigen::Index size() const { return rows_.rows(); }
  bool empty() const { return rows_.rows() == 0; }

  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrix& rows() const { return rows_; }
  auto row(Eigen::Index i) const { return rows_.row(i); }

  std::optional<Eigen::Index> find(std::string_view id) const;
  /// Throws InvalidArgument for unknown ids.
  Eigen::Index index_of(std::string_view id) const;

  /// Copy with every row scaled to unit length; zero rows are rejected.
  VectorMatrix normalized() const;

  bool operator==(const VectorMatrix& other) const;

private:
  std::vector<std::string> ids_;
  RowMatrix rows_;
  Eigen::Index dim_ = 0;
  std::unordered_map<std::string, Eigen::Index> index_;
};

/// Binary layout: 8 magic bytes "QDIMVEC1", u32 dim, u64 rows, then per row a
/// u32 byte length followed by the UTF-8 id, then row-major float32 payload.
/// All integers and floats little-endian.
void save_matrix(const VectorMatrix& m, const std::filesystem::path& path);
VectorMatrix load_matrix(const std::filesystem::path& path, bool normalize = false);

/// One JSON object per line: {"id": "...", "vector": [..]}.
VectorMatrix import_jsonl(const std::filesystem::path& path);

}  // namespace qdim
