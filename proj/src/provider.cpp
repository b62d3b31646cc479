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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "qdim/provider.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "qdim/log.hpp"
#include "qdim/util.hpp"

namespace qdim {

DenseVector TextEncoder::encode_one(const std::string& text) const {
  const std::string one[] = {text};
  return encode(one).front();
}

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

std::string post_json(const HttpSettings& settings, const std::string& path, const std::string& body) {
  const auto url = parse_url(settings.endpoint);
  httplib::Headers headers;
  if (const char* key = std::getenv(settings.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= settings.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(settings.initial_backoff * (1 << (attempt - 1)));
    }
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(settings.timeout);
    client.set_read_timeout(settings.timeout);
    client.set_write_timeout(settings.timeout);
    auto res = client.Post(url.base_path + path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      return res->body;
    } else {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    }
    if (!retryable(last_status)) break;
    log::warn("request to " + settings.endpoint + path + " failed (" + last_error + "), attempt " +
              std::to_string(attempt + 1));
  }
  throw ProviderError("request to " + settings.endpoint + path + " failed: " + last_error, last_status);
}

ChatCompletionProvider::ChatCompletionProvider(HttpSettings settings) : settings_(std::move(settings)) {
  parse_url(settings_.endpoint);
}

std::string ChatCompletionProvider::complete(const std::string& prompt) const {
  nlohmann::json req;
  req["model"] = settings_.model;
  req["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  req["temperature"] = settings_.temperature;
  req["max_tokens"] = settings_.max_tokens;
  const auto body = post_json(settings_, "/chat/completions", req.dump());
  try {
    const auto res = nlohmann::json::parse(body);
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed chat completion response: ") + e.what());
  }
}

HttpEmbeddingEncoder::HttpEmbeddingEncoder(HttpSettings settings, Eigen::Index dim, std::size_t batch_size)
    : settings_(std::move(settings)), dim_(dim), batch_size_(std::max<std::size_t>(1, batch_size)) {
  if (dim_ <= 0) throw InvalidArgument("encoder dimension must be positive");
  parse_url(settings_.endpoint);
}

std::vector<DenseVector> HttpEmbeddingEncoder::encode(std::span<const std::string> texts) const {
  std::vector<DenseVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto batch = texts.subspan(start, std::min(batch_size_, texts.size() - start));
    nlohmann::json req;
    req["model"] = settings_.model;
    req["input"] = std::vector<std::string>(batch.begin(), batch.end());
    const auto body = post_json(settings_, "/embeddings", req.dump());
    try {
      const auto res = nlohmann::json::parse(body);
      const auto& data = res.at("data");
      if (data.size() != batch.size()) throw ProviderError("embedding response has wrong item count");
      std::vector<DenseVector> items(batch.size());
      for (std::size_t pos = 0; pos < data.size(); ++pos) {
        const auto& item = data[pos];
        const auto idx = item.value("index", pos);
        const auto& values = item.at("embedding");
        if (static_cast<Eigen::Index>(values.size()) != dim_ || idx >= items.size()) {
          throw ProviderError("embedding of dimension " + std::to_string(values.size()) + ", expected " +
                              std::to_string(dim_));
        }
        DenseVector v(dim_);
        for (Eigen::Index j = 0; j < dim_; ++j) v(j) = values[static_cast<std::size_t>(j)].get<double>();
        items[idx] = std::move(v);
      }
      for (auto& v : items) out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

KeywordEncoder::KeywordEncoder(std::vector<std::string> vocabulary, std::vector<std::string> groups,
                               KeywordEncoderOptions options)
    : vocabulary_(std::move(vocabulary)), options_(options) {
  if (options_.hash_buckets < 1) throw InvalidArgument("keyword encoder needs at least one hash bucket");
  if (!groups.empty() && groups.size() != vocabulary_.size()) {
    throw InvalidArgument("keyword encoder: " + std::to_string(groups.size()) + " group labels for " +
                          std::to_string(vocabulary_.size()) + " terms");
  }
  std::unordered_map<std::string, Eigen::Index> group_ids;
  group_of_.assign(vocabulary_.size(), -1);
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    vocabulary_[i] = to_lower(vocabulary_[i]);
    if (!index_.emplace(vocabulary_[i], static_cast<Eigen::Index>(i)).second) {
      throw InvalidArgument("duplicate vocabulary term '" + vocabulary_[i] + "'");
    }
    if (!groups.empty() && !groups[i].empty()) {
      group_of_[i] = group_ids.emplace(groups[i], static_cast<Eigen::Index>(group_ids.size())).first->second;
    }
  }
  n_groups_ = static_cast<Eigen::Index>(group_ids.size());
}

KeywordEncoder KeywordEncoder::from_file(const std::filesystem::path& vocabulary_path, KeywordEncoderOptions options) {
  std::ifstream in(vocabulary_path);
  if (!in) throw IoError("cannot open vocabulary '" + vocabulary_path.string() + "'");
  std::vector<std::string> vocab;
  std::vector<std::string> groups;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string term, group;
    if (!(fields >> term)) continue;
    fields >> group;
    vocab.push_back(std::move(term));
    groups.push_back(std::move(group));
  }
  return KeywordEncoder(std::move(vocab), std::move(groups), options);
}

Eigen::Index KeywordEncoder::dim() const {
  return static_cast<Eigen::Index>(vocabulary_.size()) + n_groups_ + options_.hash_buckets;
}

std::vector<DenseVector> KeywordEncoder::encode(std::span<const std::string> texts) const {
  std::vector<DenseVector> out;
  out.reserve(texts.size());
  const auto group_base = static_cast<Eigen::Index>(vocabulary_.size());
  const auto hash_base = group_base + n_groups_;
  const auto buckets = static_cast<std::uint64_t>(options_.hash_buckets);
  for (const auto& text : texts) {
    DenseVector v = DenseVector::Zero(dim());
    for (const auto& tok : tokenize(text)) {
      if (auto it = index_.find(tok); it != index_.end()) {
        v(it->second) += 1.0;
        const auto g = group_of_[static_cast<std::size_t>(it->second)];
        if (g >= 0) v(group_base + g) += options_.group_weight;
      } else {
        v(hash_base + static_cast<Eigen::Index>(fnv1a64(tok) % buckets)) += options_.oov_weight;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

bool contains_phrase(const std::vector<std::string>& haystack, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), phrase.begin(), phrase.end()) != haystack.end();
}

const std::set<std::string>& stop_words() {
  static const std::set<std::string> words = {"a",    "an",   "the",     "is",   "are",  "does",    "do",
                                              "did",  "was",  "were",    "this", "that", "article", "text",
                                              "it",   "of",   "in",      "on",   "any",  "mention", "mentioned",
                                              "discuss", "describe", "involve", "there", "and", "or", "to"};
  return words;
}

std::vector<std::string> probe_terms(std::string_view question) {
  static const std::regex mention(R"(mention(?:s)?\s+(.+?)\s*\?\s*$)", std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(question.begin(), question.end(), m, mention)) return tokenize(m[1].str());
  std::vector<std::string> out;
  for (auto& t : tokenize(question)) {
    if (!stop_words().count(t)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::string KeywordRuleProvider::answer_probe(std::string_view question, std::string_view text) const {
  return contains_phrase(tokenize(text), probe_terms(question)) ? "Yes." : "No.";
}

std::string KeywordRuleProvider::generate(const std::string& prompt) const {
  static const std::regex count_re(R"(Generate (\d+) )");
  static const std::regex pos_re(R"(^Positive \d+\. (.*)$)");
  static const std::regex neg_re(R"(^Negative \d+\. (.*)$)");
  static const std::regex concept_re(R"(^\S+ \(([^)]+)\))");
  std::smatch m;
  int n = 10;
  if (std::regex_search(prompt, m, count_re)) n = std::stoi(m[1].str());

  std::vector<std::vector<std::string>> pos, neg;
  std::vector<std::string> concepts;
  bool in_context = false;
  std::istringstream lines(prompt);
  std::string line;
  while (std::getline(lines, line)) {
    if (std::regex_match(line, m, pos_re)) {
      pos.push_back(tokenize(m[1].str()));
    } else if (std::regex_match(line, m, neg_re)) {
      neg.push_back(tokenize(m[1].str()));
    } else if (line.rfind("UMLS Context:", 0) == 0) {
      in_context = true;
    } else if (in_context && std::regex_search(line, m, concept_re)) {
      concepts.push_back(m[1].str());
    }
  }
  if (pos.empty()) return "I could not find any positive articles.";

  auto rate = [](const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& phrase) {
    if (docs.empty()) return 0.0;
    double hits = 0;
    for (const auto& d : docs) hits += contains_phrase(d, phrase) ? 1.0 : 0.0;
    return hits / static_cast<double>(docs.size());
  };

  if (concepts.empty()) {
    std::set<std::string> vocab;
    for (const auto& d : pos) {
      for (const auto& t : d) {
        if (t.size() >= 4 && !stop_words().count(t)) vocab.insert(t);
      }
    }
    concepts.assign(vocab.begin(), vocab.end());
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const auto phrase = tokenize(concepts[i]);
    const double s = rate(pos, phrase) - rate(neg, phrase);
    if (s > 0.0) ranked.emplace_back(s, i);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  std::ostringstream out;
  out << "Here are the questions:\n\n";
  std::set<std::string> seen;
  int written = 0;
  for (const auto& [score, i] : ranked) {
    if (written == n) break;
    if (!seen.insert(to_lower(concepts[i])).second) continue;
    out << ++written << ". Does the article mention " << concepts[i] << "?\n";
  }
  return out.str();
}

std::string KeywordRuleProvider::complete(const std::string& prompt) const {
  static constexpr std::string_view kProbe = "Answer strictly yes or no.";
  if (prompt.rfind(kProbe, 0) == 0) {
    const auto q = prompt.find("Question: ");
    const auto t = prompt.find(" Text: ", q == std::string::npos ? 0 : q);
    if (q == std::string::npos || t == std::string::npos) return "I cannot tell.";
    return answer_probe(std::string_view(prompt).substr(q + 10, t - q - 10), std::string_view(prompt).substr(t + 7));
  }
  return generate(prompt);
}

}  // namespace qdim
