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

#include "qdim/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "qdim/util.hpp"

namespace qdim {

namespace {

using Literal = std::variant<std::string, std::int64_t, double, bool>;

Literal parse_literal(const std::string& raw, bool lenient) {
  const auto v = trim(raw);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v.front() == '"' && v[i] == '\\' && i + 2 < v.size()) {
        const char e = v[++i];
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(v[i]);
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::int64_t i = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ec == std::errc() && p == v.data() + v.size()) return i;
  double d = 0;
  auto [p2, ec2] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec2 == std::errc() && p2 == v.data() + v.size()) return d;
  if (lenient && !v.empty()) return v;
  throw InvalidArgument("cannot parse value '" + v + "'");
}

std::string describe(const Literal& l) {
  return std::visit([](const auto& x) {
    std::ostringstream s;
    s << x;
    return s.str();
  }, l);
}

std::int64_t as_int(const std::string& key, const Literal& l) {
  if (auto* i = std::get_if<std::int64_t>(&l)) return *i;
  throw InvalidArgument(key + ": expected an integer, got '" + describe(l) + "'");
}

double as_double(const std::string& key, const Literal& l) {
  if (auto* d = std::get_if<double>(&l)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&l)) return static_cast<double>(*i);
  throw InvalidArgument(key + ": expected a number, got '" + describe(l) + "'");
}

std::string as_string(const std::string& key, const Literal& l) {
  if (auto* s = std::get_if<std::string>(&l)) return *s;
  throw InvalidArgument(key + ": expected a string, got '" + describe(l) + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const Literal&, const std::filesystem::path&)>;

const std::map<std::string, Setter>& setters() {
  auto path_of = [](const std::string& key, const Literal& l, const std::filesystem::path& base) {
    std::filesystem::path p = as_string(key, l);
    if (!p.empty() && p.is_relative() && !base.empty()) p = base / p;
    return p;
  };
  static const std::map<std::string, Setter> table = {
      {"seed", [](auto& c, auto& k, auto& l, auto&) { c.seed = static_cast<std::uint64_t>(as_int(k, l)); }},
      {"workers", [](auto& c, auto& k, auto& l, auto&) { c.workers = static_cast<std::size_t>(std::max<std::int64_t>(0, as_int(k, l))); }},
      {"paths.corpus", [=](auto& c, auto& k, auto& l, auto& b) { c.paths.corpus = path_of(k, l, b); }},
      {"paths.vectors", [=](auto& c, auto& k, auto& l, auto& b) { c.paths.vectors = path_of(k, l, b); }},
      {"paths.annotations", [=](auto& c, auto& k, auto& l, auto& b) { c.paths.annotations = path_of(k, l, b); }},
      {"paths.concepts", [=](auto& c, auto& k, auto& l, auto& b) { c.paths.concepts = path_of(k, l, b); }},
      {"paths.output_dir", [=](auto& c, auto& k, auto& l, auto& b) { c.paths.output_dir = path_of(k, l, b); }},
      {"encoder.kind", [](auto& c, auto& k, auto& l, auto&) { c.encoder.kind = as_string(k, l); }},
      {"encoder.vocabulary", [=](auto& c, auto& k, auto& l, auto& b) { c.encoder.vocabulary = path_of(k, l, b); }},
      {"encoder.endpoint", [](auto& c, auto& k, auto& l, auto&) { c.encoder.endpoint = as_string(k, l); }},
      {"encoder.model", [](auto& c, auto& k, auto& l, auto&) { c.encoder.model = as_string(k, l); }},
      {"encoder.dim", [](auto& c, auto& k, auto& l, auto&) { c.encoder.dim = static_cast<int>(as_int(k, l)); }},
      {"encoder.batch_size", [](auto& c, auto& k, auto& l, auto&) { c.encoder.batch_size = static_cast<int>(as_int(k, l)); }},
      {"provider.kind", [](auto& c, auto& k, auto& l, auto&) { c.provider.kind = as_string(k, l); }},
      {"provider.endpoint", [](auto& c, auto& k, auto& l, auto&) { c.provider.endpoint = as_string(k, l); }},
      {"provider.model", [](auto& c, auto& k, auto& l, auto&) { c.provider.model = as_string(k, l); }},
      {"provider.api_key_env", [](auto& c, auto& k, auto& l, auto&) { c.provider.api_key_env = as_string(k, l); }},
      {"provider.temperature", [](auto& c, auto& k, auto& l, auto&) { c.provider.temperature = as_double(k, l); }},
      {"provider.max_tokens", [](auto& c, auto& k, auto& l, auto&) { c.provider.max_tokens = static_cast<int>(as_int(k, l)); }},
      {"provider.max_retries", [](auto& c, auto& k, auto& l, auto&) { c.provider.max_retries = static_cast<int>(as_int(k, l)); }},
      {"cluster.k", [](auto& c, auto& k, auto& l, auto&) { c.cluster.k = static_cast<int>(as_int(k, l)); }},
      {"cluster.max_iter", [](auto& c, auto& k, auto& l, auto&) { c.cluster.max_iter = static_cast<int>(as_int(k, l)); }},
      {"cluster.tol", [](auto& c, auto& k, auto& l, auto&) { c.cluster.tol = as_double(k, l); }},
      {"generation.p_pos", [](auto& c, auto& k, auto& l, auto&) { c.generation.sampling.p_pos = static_cast<int>(as_int(k, l)); }},
      {"generation.p_hard", [](auto& c, auto& k, auto& l, auto&) { c.generation.sampling.p_hard = static_cast<int>(as_int(k, l)); }},
      {"generation.p_easy", [](auto& c, auto& k, auto& l, auto&) { c.generation.sampling.p_easy = static_cast<int>(as_int(k, l)); }},
      {"generation.n_hard_clusters", [](auto& c, auto& k, auto& l, auto&) { c.generation.sampling.n_hard_clusters = static_cast<int>(as_int(k, l)); }},
      {"generation.n_questions", [](auto& c, auto& k, auto& l, auto&) { c.generation.n_questions = static_cast<int>(as_int(k, l)); }},
      {"generation.top_n_concepts", [](auto& c, auto& k, auto& l, auto&) { c.generation.top_n_concepts = static_cast<int>(as_int(k, l)); }},
      {"generation.prompt_template", [=](auto& c, auto& k, auto& l, auto& b) { c.generation.prompt_template = path_of(k, l, b); }},
      {"filter.theta", [](auto& c, auto& k, auto& l, auto&) { c.filter.theta = as_double(k, l); }},
      {"filter.quota_base", [](auto& c, auto& k, auto& l, auto&) { c.filter.quota_base = static_cast<int>(as_int(k, l)); }},
      {"filter.quota_lo", [](auto& c, auto& k, auto& l, auto&) { c.filter.quota_lo = static_cast<int>(as_int(k, l)); }},
      {"filter.quota_hi", [](auto& c, auto& k, auto& l, auto&) { c.filter.quota_hi = static_cast<int>(as_int(k, l)); }},
      {"embed.method", [](auto& c, auto& k, auto& l, auto&) { c.embed.method = parse_embed_method(as_string(k, l)); }},
      {"embed.k", [](auto& c, auto& k, auto& l, auto&) { c.embed.k = static_cast<int>(as_int(k, l)); }},
      {"embed.lambda", [](auto& c, auto& k, auto& l, auto&) { c.embed.lambda = as_double(k, l); }},
      {"embed.tau", [](auto& c, auto& k, auto& l, auto&) { c.embed.tau = as_double(k, l); }},
      {"embed.similarity", [](auto& c, auto& k, auto& l, auto&) {
         const auto s = as_string(k, l);
         if (s == "cosine") c.embed.similarity = SimilarityKind::cosine;
         else if (s == "jaccard") c.embed.similarity = SimilarityKind::jaccard;
         else throw InvalidArgument(k + ": expected cosine or jaccard");
       }},
      {"classifier.n_pos", [](auto& c, auto& k, auto& l, auto&) { c.classifier.counts.n_pos = static_cast<int>(as_int(k, l)); }},
      {"classifier.n_hard", [](auto& c, auto& k, auto& l, auto&) { c.classifier.counts.n_hard = static_cast<int>(as_int(k, l)); }},
      {"classifier.n_rand", [](auto& c, auto& k, auto& l, auto&) { c.classifier.counts.n_rand = static_cast<int>(as_int(k, l)); }},
      {"classifier.n_hard_clusters", [](auto& c, auto& k, auto& l, auto&) { c.classifier.counts.n_hard_clusters = static_cast<int>(as_int(k, l)); }},
      {"classifier.lr", [](auto& c, auto& k, auto& l, auto&) { c.classifier.train.lr = as_double(k, l); }},
      {"classifier.epochs", [](auto& c, auto& k, auto& l, auto&) { c.classifier.train.epochs = static_cast<int>(as_int(k, l)); }},
      {"classifier.l2", [](auto& c, auto& k, auto& l, auto&) { c.classifier.train.l2 = as_double(k, l); }},
      {"eval.clustering", [=](auto& c, auto& k, auto& l, auto& b) { c.eval.clustering = path_of(k, l, b); }},
      {"eval.sts", [=](auto& c, auto& k, auto& l, auto& b) { c.eval.sts = path_of(k, l, b); }},
      {"eval.queries", [=](auto& c, auto& k, auto& l, auto& b) { c.eval.queries = path_of(k, l, b); }},
      {"eval.retrieval_corpus", [=](auto& c, auto& k, auto& l, auto& b) { c.eval.retrieval_corpus = path_of(k, l, b); }},
      {"eval.qrels", [=](auto& c, auto& k, auto& l, auto& b) { c.eval.qrels = path_of(k, l, b); }},
      {"eval.ndcg_k", [](auto& c, auto& k, auto& l, auto&) { c.eval.ndcg_k = static_cast<int>(as_int(k, l)); }},
      {"eval.gain", [](auto& c, auto& k, auto& l, auto&) {
         const auto s = as_string(k, l);
         if (s == "linear") c.eval.gain = Gain::linear;
         else if (s == "exponential") c.eval.gain = Gain::exponential;
         else throw InvalidArgument(k + ": expected linear or exponential");
       }},
  };
  return table;
}

void set(PipelineConfig& config, const std::string& key, const Literal& value, const std::filesystem::path& base) {
  if (key == "provider.api_key" || key == "encoder.api_key" || key == "api_key") {
    throw InvalidArgument(key + ": API keys are read from the environment only");
  }
  auto it = setters().find(key);
  if (it == setters().end()) throw InvalidArgument("unknown config key '" + key + "'");
  it->second(config, key, value, base);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("config: " + what);
}

}  // namespace

void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir) {
  set(config, key, parse_literal(value, true), base_dir);
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip a trailing comment that is not inside a string.
    bool quoted = false;
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '\\' && quote == '"') ++i;
        else if (ch == quote) quoted = false;
      } else if (ch == '"' || ch == '\'') {
        quoted = true;
        quote = ch;
      } else if (ch == '#') {
        line.resize(i);
        break;
      }
    }
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw InvalidArgument("config " + where + "unterminated table header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config " + where + "expected key = value");
    const auto key = trim(t.substr(0, eq));
    const auto full = section.empty() ? key : section + "." + key;
    try {
      set(config, full, parse_literal(t.substr(eq + 1), false), base_dir);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config " + where + e.what());
    }
  }
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

void PipelineConfig::validate() const {
  require(workers >= 1, "workers must be at least 1");
  require(encoder.kind == "keyword" || encoder.kind == "http", "encoder.kind must be keyword or http");
  require(encoder.kind != "http" || encoder.dim > 0, "encoder.dim must be positive for the http encoder");
  require(encoder.batch_size >= 1, "encoder.batch_size must be at least 1");
  require(provider.kind == "mock" || provider.kind == "http", "provider.kind must be mock or http");
  require(provider.temperature >= 0.0, "provider.temperature must be non-negative");
  require(provider.max_tokens >= 1, "provider.max_tokens must be at least 1");
  require(provider.max_retries >= 0, "provider.max_retries must be non-negative");
  require(cluster.k >= 1, "cluster.k must be at least 1");
  require(cluster.max_iter >= 1, "cluster.max_iter must be at least 1");
  require(cluster.tol >= 0.0, "cluster.tol must be non-negative");
  const auto& s = generation.sampling;
  require(s.p_pos >= 1 && s.p_hard >= 0 && s.p_easy >= 0, "generation.p_pos must be >= 1 and p_hard, p_easy >= 0");
  require(s.p_hard + s.p_easy >= 1, "generation needs at least one negative document");
  require(s.n_hard_clusters >= 1, "generation.n_hard_clusters must be at least 1");
  require(generation.n_questions >= 1, "generation.n_questions must be at least 1");
  require(generation.top_n_concepts >= 1, "generation.top_n_concepts must be at least 1");
  require(filter.theta > 0.0 && filter.theta <= 1.0, "filter.theta must lie in (0, 1]");
  require(filter.quota_base >= 0 && filter.quota_lo >= 0, "filter quotas must be non-negative");
  require(filter.quota_lo <= filter.quota_hi, "filter.quota_lo must not exceed filter.quota_hi");
  require(embed.k >= 1, "embed.k must be at least 1");
  require(embed.lambda >= 0.0 && embed.lambda <= 1.0, "embed.lambda must lie in [0, 1]");
  require(embed.tau >= 0.0 && embed.tau <= 1.0, "embed.tau must lie in [0, 1]");
  const auto& cc = classifier.counts;
  require(cc.n_pos >= 1 && cc.n_hard >= 0 && cc.n_rand >= 0 && cc.n_hard + cc.n_rand >= 1,
          "classifier counts need positives and at least one negative");
  require(classifier.train.lr > 0.0, "classifier.lr must be positive");
  require(classifier.train.epochs >= 0, "classifier.epochs must be non-negative");
  require(classifier.train.l2 >= 0.0, "classifier.l2 must be non-negative");
  require(eval.ndcg_k >= 1, "eval.ndcg_k must be at least 1");
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["workers"] = workers;
  j["paths"] = {{"corpus", paths.corpus.string()},
                {"vectors", paths.vectors.string()},
                {"annotations", paths.annotations.string()},
                {"concepts", paths.concepts.string()},
                {"output_dir", paths.output_dir.string()}};
  j["encoder"] = {{"kind", encoder.kind},         {"vocabulary", encoder.vocabulary.string()},
                  {"endpoint", encoder.endpoint}, {"model", encoder.model},
                  {"dim", encoder.dim},           {"batch_size", encoder.batch_size}};
  j["provider"] = {{"kind", provider.kind},
                   {"endpoint", provider.endpoint},
                   {"model", provider.model},
                   {"api_key_env", provider.api_key_env},
                   {"temperature", provider.temperature},
                   {"max_tokens", provider.max_tokens},
                   {"max_retries", provider.max_retries}};
  j["cluster"] = {{"k", cluster.k}, {"max_iter", cluster.max_iter}, {"tol", cluster.tol}};
  j["generation"] = {{"p_pos", generation.sampling.p_pos},
                     {"p_hard", generation.sampling.p_hard},
                     {"p_easy", generation.sampling.p_easy},
                     {"n_hard_clusters", generation.sampling.n_hard_clusters},
                     {"n_questions", generation.n_questions},
                     {"top_n_concepts", generation.top_n_concepts},
                     {"prompt_template", generation.prompt_template.string()}};
  j["filter"] = {{"theta", filter.theta},
                 {"quota_base", filter.quota_base},
                 {"quota_lo", filter.quota_lo},
                 {"quota_hi", filter.quota_hi}};
  j["embed"] = {{"method", to_string(embed.method)},
                {"k", embed.k},
                {"lambda", embed.lambda},
                {"tau", embed.tau},
                {"similarity", embed.similarity == SimilarityKind::cosine ? "cosine" : "jaccard"}};
  j["classifier"] = {{"n_pos", classifier.counts.n_pos},
                     {"n_hard", classifier.counts.n_hard},
                     {"n_rand", classifier.counts.n_rand},
                     {"n_hard_clusters", classifier.counts.n_hard_clusters},
                     {"lr", classifier.train.lr},
                     {"epochs", classifier.train.epochs},
                     {"l2", classifier.train.l2}};
  j["eval"] = {{"clustering", eval.clustering.string()},
               {"sts", eval.sts.string()},
               {"queries", eval.queries.string()},
               {"retrieval_corpus", eval.retrieval_corpus.string()},
               {"qrels", eval.qrels.string()},
               {"ndcg_k", eval.ndcg_k},
               {"gain", eval.gain == Gain::linear ? "linear" : "exponential"}};
  return j;
}

std::string render_config_toml(const PipelineConfig& config) {
  const auto j = config.to_json();
  std::ostringstream out;
  auto value = [](const nlohmann::ordered_json& v) { return v.dump(); };
  for (const auto& [key, v] : j.items()) {
    if (!v.is_object()) out << key << " = " << value(v) << "\n";
  }
  for (const auto& [section, table] : j.items()) {
    if (!table.is_object()) continue;
    out << "\n[" << section << "]\n";
    for (const auto& [key, v] : table.items()) {
      if (v.is_string() && v.get<std::string>().empty()) continue;
      out << key << " = " << value(v) << "\n";
    }
  }
  return out.str();
}

}  // namespace qdim
