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

#include <doctest.h>

// Eigen first: <resolv.h> (pulled in by httplib) defines a `_res` macro.
#include "qdim/provider.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "qdim/util.hpp"
#include "oracles.hpp"

using namespace qdim;

namespace {

/// Serves scripted statuses in order, then 200s, on a free local port.
class ScriptedServer {
public:
  explicit ScriptedServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post(R"(/v1/(chat/completions|embeddings))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto n = calls_++;
      auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (static_cast<std::size_t>(n) < statuses_.size()) {
        res.status = statuses_[static_cast<std::size_t>(n)];
        res.set_content("busy", "text/plain");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json out;
      if (req.path.ends_with("embeddings")) {
        out["data"] = nlohmann::json::array();
        const auto& inputs = body.at("input");
        // Reverse order with explicit indices to exercise reordering.
        for (std::size_t i = inputs.size(); i-- > 0;) {
          const double len = static_cast<double>(inputs[i].get<std::string>().size());
          out["data"].push_back({{"index", i}, {"embedding", {len, 1.0, -len}}});
        }
      } else {
        const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
        out["choices"] = {{{"message", {{"role", "assistant"}, {"content", "echo: " + prompt}}}}};
      }
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }

  HttpSettings settings() const {
    HttpSettings s;
    s.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    s.model = "m";
    s.api_key_env = "QDIM_TEST_PROVIDER_KEY";
    s.initial_backoff = std::chrono::milliseconds(1);
    s.timeout = std::chrono::seconds(5);
    return s;
  }
  int calls() const { return calls_; }
  std::string auth() const { return auth_; }
  std::string last_body() const { return last_body_; }

private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<int> calls_{0};
  std::string auth_;
  std::string last_body_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("chat completion with bearer token from the environment") {
  ScriptedServer server({});
  ::setenv("QDIM_TEST_PROVIDER_KEY", "secret-token", 1);
  ChatCompletionProvider p(server.settings());
  CHECK(p.complete("hello") == "echo: hello");
  CHECK(server.auth() == "Bearer secret-token");
  const auto req = nlohmann::json::parse(server.last_body());
  CHECK(req["model"] == "m");
  CHECK(req["temperature"] == 0.0);
  ::unsetenv("QDIM_TEST_PROVIDER_KEY");
  CHECK(p.complete("again") == "echo: again");
  CHECK(server.auth().empty());
}

TEST_CASE("rate limits and server errors are retried") {
  ScriptedServer server({429, 503});
  ChatCompletionProvider p(server.settings());
  CHECK(p.complete("x") == "echo: x");
  CHECK(server.calls() == 3);
}

TEST_CASE("retries are bounded and client errors fail fast") {
  {
    ScriptedServer server({503, 503, 503, 503, 503});
    auto s = server.settings();
    s.max_retries = 2;
    ChatCompletionProvider p(s);
    try {
      p.complete("x");
      FAIL("expected a provider error");
    } catch (const ProviderError& e) {
      CHECK(e.status() == 503);
    }
    CHECK(server.calls() == 3);
  }
  {
    ScriptedServer server({400});
    ChatCompletionProvider p(server.settings());
    CHECK_THROWS_AS(p.complete("x"), ProviderError);
    CHECK(server.calls() == 1);
  }
}

TEST_CASE("unreachable endpoint and bad urls") {
  HttpSettings s;
  s.endpoint = "http://127.0.0.1:1/v1";
  s.max_retries = 1;
  s.initial_backoff = std::chrono::milliseconds(1);
  s.timeout = std::chrono::seconds(2);
  ChatCompletionProvider p(s);
  try {
    p.complete("x");
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(e.status() == 0);
  }
  s.endpoint = "localhost:8000";
  CHECK_THROWS_AS(ChatCompletionProvider{s}, InvalidArgument);
}

TEST_CASE("http embedding encoder batches and reorders") {
  ScriptedServer server({});
  HttpEmbeddingEncoder enc(server.settings(), 3, 2);
  const std::vector<std::string> texts{"a", "bbb", "cc", "dddd", "e"};
  const auto out = enc.encode(texts);
  REQUIRE(out.size() == 5);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(out[i](0) == static_cast<double>(texts[i].size()));
  CHECK(server.calls() == 3);
  HttpEmbeddingEncoder wrong(server.settings(), 4);
  CHECK_THROWS_AS(wrong.encode(texts), ProviderError);
}

TEST_CASE("keyword encoder") {
  KeywordEncoder enc({"Heart", "lung", "kidney"}, {"organs", "organs", ""}, {4, 0.1, 0.5});
  CHECK(enc.dim() == 3 + 1 + 4);
  const auto v = enc.encode_one("heart HEART lung unknownword");
  CHECK(v(0) == 2.0);
  CHECK(v(1) == 1.0);
  CHECK(v(2) == 0.0);
  CHECK(v(3) == doctest::Approx(1.5));
  CHECK(v.tail(4).sum() == doctest::Approx(0.1));
  CHECK(enc.encode_one("kidney")(3) == 0.0);
  CHECK_THROWS_AS(KeywordEncoder({"a", "A"}), InvalidArgument);
  CHECK_THROWS_AS(KeywordEncoder({"a"}, {"g", "h"}), InvalidArgument);

  oracle::TempDir dir("provider");
  std::ofstream(dir / "v.txt") << "alpha g1\nbeta\n\ngamma g1\n";
  const auto f = KeywordEncoder::from_file(dir / "v.txt");
  CHECK(f.vocabulary() == std::vector<std::string>{"alpha", "beta", "gamma"});
  CHECK(f.dim() == 3 + 1 + 16);
  CHECK_THROWS_AS(KeywordEncoder::from_file(dir / "missing.txt"), IoError);
}

TEST_CASE("keyword rule provider") {
  KeywordRuleProvider p;
  CHECK(p.answer_probe("Does the article mention heart failure?", "Acute heart failure was seen.") == "Yes.");
  CHECK(p.answer_probe("Does the article mention heart failure?", "The heart did not fail.") == "No.");
  CHECK(p.complete("Answer strictly yes or no. Question: Does the article mention lung? Text: lung scan") == "Yes.");
  CHECK(p.complete("Answer strictly yes or no. garbled") == "I cannot tell.");

  const std::string prompt =
      "Generate 2 questions.\n"
      "Positive 1. renal kidney dialysis\n"
      "Positive 2. kidney transplant renal\n"
      "Negative 1. cardiac arrest renal\n"
      "UMLS Context:\n"
      "C1 (kidney): organ\n"
      "C2 (renal): adjective\n"
      "C3 (cardiac): heart\n";
  const auto out = p.complete(prompt);
  CHECK(out.find("1. Does the article mention kidney?") != std::string::npos);
  CHECK(out.find("renal") == std::string::npos);  // present on both sides, no contrast
  CHECK(out.find("cardiac") == std::string::npos);
  CHECK(p.complete("Generate 3 questions.\nno articles") == "I could not find any positive articles.");
}
