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

#include "qdim/vectors.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace qdim {

namespace {

constexpr std::array<char, 8> kMagic = {'Q', 'D', 'I', 'M', 'V', 'E', 'C', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos) {
  if (buf.size() - pos < sizeof(T)) {
    throw FormatError("vector file truncated");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

}  // namespace

VectorMatrix::VectorMatrix(Eigen::Index dim) : rows_(0, dim), dim_(dim) {
  if (dim <= 0) throw InvalidArgument("vector dimension must be positive");
}

VectorMatrix::VectorMatrix(std::vector<std::string> ids, RowMatrix rows)
    : ids_(std::move(ids)), rows_(std::move(rows)), dim_(rows_.cols()) {
  if (dim_ <= 0) throw InvalidArgument("vector dimension must be positive");
  if (static_cast<Eigen::Index>(ids_.size()) != rows_.rows()) {
    throw InvalidArgument("id count " + std::to_string(ids_.size()) + " does not match row count " +
                          std::to_string(rows_.rows()));
  }
  require_finite(rows_, "vector matrix");
  index_.reserve(ids_.size());
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw InvalidArgument("duplicate id '" + ids_[i] + "'");
    }
  }
}

VectorMatrix VectorMatrix::from_rows(std::vector<std::string> ids,
                                     const std::vector<DenseVector>& rows, Eigen::Index dim) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw InvalidArgument("row " + std::to_string(i) + " has dimension " +
                            std::to_string(rows[i].size()) + ", expected " + std::to_string(dim));
    }
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return VectorMatrix(std::move(ids), std::move(m));
}

std::optional<Eigen::Index> VectorMatrix::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index VectorMatrix::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw InvalidArgument("unknown id '" + std::string(id) + "'");
}

VectorMatrix VectorMatrix::normalized() const {
  RowMatrix out = rows_;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n == 0.0) throw InvalidArgument("cannot normalize zero row '" + ids_[i] + "'");
    out.row(i) /= n;
  }
  return VectorMatrix(ids_, std::move(out));
}

bool VectorMatrix::operator==(const VectorMatrix& other) const {
  return dim_ == other.dim_ && ids_ == other.ids_ && rows_ == other.rows_;
}

void save_matrix(const VectorMatrix& m, const std::filesystem::path& path) {
  std::string buf(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(m.dim()));
  put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(m.size()));
  for (const auto& id : m.ids()) {
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(id.size()));
    buf += id;
  }
  buf.reserve(buf.size() + static_cast<std::size_t>(m.size() * m.dim()) * 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (Eigen::Index j = 0; j < m.dim(); ++j) {
      const float f = static_cast<float>(m.rows()(i, j));
      if (!std::isfinite(f)) {
        throw InvalidArgument("value at row '" + m.ids()[i] + "' overflows float32");
      }
      put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(f));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

VectorMatrix load_matrix(const std::filesystem::path& path, bool normalize) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kMagic.size() || std::memcmp(buf.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("'" + path.string() + "' is not a vector matrix file (bad magic)");
  }
  std::size_t pos = kMagic.size();
  const auto dim = get_le<std::uint32_t>(buf, pos);
  const auto rows = get_le<std::uint64_t>(buf, pos);
  if (dim == 0) throw FormatError("header declares dimension 0");
  std::vector<std::string> ids;
  for (std::uint64_t i = 0; i < rows; ++i) {
    const auto len = get_le<std::uint32_t>(buf, pos);
    if (buf.size() - pos < len) throw FormatError("ids block truncated");
    ids.emplace_back(buf.substr(pos, len));
    pos += len;
  }
  const std::size_t expected = static_cast<std::size_t>(rows) * dim * 4;
  if (buf.size() - pos != expected) {
    throw FormatError("payload holds " + std::to_string(buf.size() - pos) + " bytes, header implies " +
                      std::to_string(expected));
  }
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = std::bit_cast<float>(get_le<std::uint32_t>(buf, pos));
    }
  }
  try {
    VectorMatrix out(std::move(ids), std::move(m));
    return normalize ? out.normalized() : out;
  } catch (const InvalidArgument& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

VectorMatrix import_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> ids;
  std::vector<DenseVector> rows;
  Eigen::Index dim = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      const auto& values = obj.at("vector");
      DenseVector v(static_cast<Eigen::Index>(values.size()));
      for (std::size_t j = 0; j < values.size(); ++j) v(static_cast<Eigen::Index>(j)) = values[j].get<double>();
      if (dim < 0) dim = v.size();
      if (v.size() != dim) throw FormatError("dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
      ids.push_back(obj.at("id").get<std::string>());
      rows.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (dim <= 0) throw FormatError("'" + path.string() + "' contains no vectors");
  try {
    return VectorMatrix::from_rows(std::move(ids), rows, dim);
  } catch (const InvalidArgument& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace qdim
