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

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qdim/error.hpp"
#include "qdim/vectors.hpp"

namespace qdim {

/// Text-generation backend. complete() is a stateless request/response
/// exchange; implementations must be safe to call from several threads.
class GenerationProvider {
public:
  virtual ~GenerationProvider() = default;
  virtual std::string complete(const std::string& prompt) const = 0;
  virtual std::string name() const = 0;
};

/// Dense text encoder. Implementations must be safe to call from several threads.
class TextEncoder {
public:
  virtual ~TextEncoder() = default;
  virtual Eigen::Index dim() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<DenseVector> encode(std::span<const std::string> texts) const = 0;

  DenseVector encode_one(const std::string& text) const;
};

class ProviderError : public Error {
public:
  ProviderError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  /// HTTP status of the last attempt, 0 for transport failures.
  int status() const { return status_; }

private:
  int status_;
};

struct HttpSettings {
  /// Base URL up to and including the API version, e.g. "http://localhost:8000/v1".
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the bearer token. The key itself
  /// is never read from flags or files.
  std::string api_key_env = "QDIM_API_KEY";
  double temperature = 0.0;
  int max_tokens = 512;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{120};
};

/// POSTs JSON to endpoint + path, retrying transport errors, 429 and 5xx with
/// exponential backoff. Returns the parsed response body.
std::string post_json(const HttpSettings& settings, const std::string& path, const std::string& body);

/// OpenAI-compatible /chat/completions client.
class ChatCompletionProvider : public GenerationProvider {
public:
  explicit ChatCompletionProvider(HttpSettings settings);
  std::string complete(const std::string& prompt) const override;
  std::string name() const override { return "chat:" + settings_.model; }

private:
  HttpSettings settings_;
};

/// OpenAI-compatible /embeddings client.
class HttpEmbeddingEncoder : public TextEncoder {
public:
  HttpEmbeddingEncoder(HttpSettings settings, Eigen::Index dim, std::size_t batch_size = 64);
  Eigen::Index dim() const override { return dim_; }
  std::string name() const override { return "http:" + settings_.model; }
  std::vector<DenseVector> encode(std::span<const std::string> texts) const override;

private:
  HttpSettings settings_;
  Eigen::Index dim_;
  std::size_t batch_size_;
};

/// Bag-of-keyword encoder: one dimension per vocabulary term (counts), plus
/// `hash_buckets` dimensions receiving out-of-vocabulary tokens with weight
/// `oov_weight`, so no non-empty text encodes to zero.
///
/// A term may carry a group label (e.g. its topic). Every group gets one
/// extra dimension and each occurrence of a grouped term adds `group_weight`
/// to it, so terms of the same group end up mildly similar to each other.
struct KeywordEncoderOptions {
  int hash_buckets = 16;
  double oov_weight = 0.1;
  double group_weight = 0.6;
};

class KeywordEncoder : public TextEncoder {
public:
  /// `groups` is empty or parallel to `vocabulary`; an empty label means no group.
  explicit KeywordEncoder(std::vector<std::string> vocabulary, std::vector<std::string> groups = {},
                          KeywordEncoderOptions options = {});
  /// One term per line, optionally followed by whitespace and a group label.
  static KeywordEncoder from_file(const std::filesystem::path& vocabulary_path, KeywordEncoderOptions options = {});

  Eigen::Index dim() const override;
  std::string name() const override { return "keyword-mock"; }
  std::vector<DenseVector> encode(std::span<const std::string> texts) const override;

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

private:
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, Eigen::Index> index_;
  std::vector<Eigen::Index> group_of_;  // -1 when ungrouped
  Eigen::Index n_groups_ = 0;
  KeywordEncoderOptions options_;
};

/// Deterministic keyword-rule stand-in for an LLM. Generation prompts yield
/// "Does the article mention <concept>?" questions for context concepts
/// (falling back to plain tokens) that occur in more positive than negative
/// articles; probe prompts are answered "Yes."/"No." by phrase lookup.
class KeywordRuleProvider : public GenerationProvider {
public:
  std::string complete(const std::string& prompt) const override;
  std::string name() const override { return "keyword-rule-mock"; }

  std::string answer_probe(std::string_view question, std::string_view text) const;
  std::string generate(const std::string& prompt) const;
};

}  // namespace qdim
