// Copyright 2026 The avllm Authors.
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

#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "avllm/embedder.hpp"
#include "avllm/vector_store.hpp"
#include "test_support.hpp"

namespace avllm {
namespace {

double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values()) s += x * x;
  return std::sqrt(s);
}

TEST(Fnv1a64, KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(tokenize("Héllo, WORLD! ÜBER straße"),
            (std::vector<std::string>{"héllo", "world", "über", "straße"}));
  EXPECT_EQ(tokenize("  a-b_c  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(tokenize("?!  ...\t").empty());
  EXPECT_EQ(tokenize("3x\xe2\x80\x94y"), (std::vector<std::string>{"3x", "y"}));  // em dash splits
}

TEST(HashFeatures, UnigramsThenBigrams) {
  EXPECT_EQ(hash_features("Lift drag thrust"),
            (std::vector<std::string>{"lift", "drag", "thrust", "lift\x1f" "drag", "drag\x1f" "thrust"}));
}

TEST(EmbedHash, FrozenOracleVectors) {
  const auto a = embed_hash("lift drag", 16);
  const auto b = embed_hash("drag lift", 16);
  const double third = 0.5773502691896258;
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(a[i], (i == 3 || i == 7 || i == 12) ? third : 0.0, 1e-15) << i;
    EXPECT_NEAR(b[i], (i == 1 || i == 3 || i == 12) ? third : 0.0, 1e-15) << i;
  }

  const auto c = embed_hash("Héllo, WORLD! ÜBER straße", 16);
  const double s = 0.3779644730092272;
  for (std::size_t i = 0; i < 16; ++i) {
    double expected = 0.0;
    if (i == 0 || i == 15) expected = s;
    if (i == 3) expected = -s;
    if (i == 11) expected = -0.7559289460184544;
    EXPECT_NEAR(c[i], expected, 1e-15) << i;
  }
}

TEST(EmbedHash, FrozenOracleCosines) {
  EXPECT_NEAR(cosine_similarity(embed_hash("lift drag").values(), embed_hash("drag lift").values()),
              0.6666666666666669, 1e-12);
  EXPECT_NEAR(cosine_similarity(embed_hash("stall recovery procedure").values(),
                                embed_hash("stall recovery procedure steps").values()),
              0.8451542547285168, 1e-12);
  EXPECT_NEAR(cosine_similarity(embed_hash("stall recovery procedure").values(),
                                embed_hash("stall recovery steps").values()),
              0.6000000000000001, 1e-12);
  EXPECT_NEAR(cosine_similarity(embed_hash("stall recovery procedure").values(),
                                embed_hash("runway lighting categories").values()),
              0.0, 1e-12);
}

TEST(EmbedHash, CaseInsensitive) {
  EXPECT_EQ(embed_hash("Stall RECOVERY"), embed_hash("stall recovery"));
  EXPECT_EQ(embed_hash("ÜBER"), embed_hash("über"));
}

TEST(EmbedHash, DeterministicUnitNormAcrossRandomStrings) {
  std::mt19937_64 rng(2024);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789.,;!?-";
  std::uniform_int_distribution<std::size_t> len(1, 80), pick(0, alphabet.size() - 1);
  const HashEmbedder embedder;
  int embedded = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const std::size_t n = len(rng);
    for (std::size_t j = 0; j < n; ++j) s.push_back(alphabet[pick(rng)]);
    s += " w" + std::to_string(i);  // at least one token
    const auto a = embedder.embed(s);
    const auto b = embedder.embed(s);
    ASSERT_EQ(a, b);
    ASSERT_EQ(a.dimension(), 256u);
    ASSERT_NEAR(norm(a), 1.0, 1e-6);
    ++embedded;
  }
  EXPECT_EQ(embedded, 1000);
}

TEST(EmbedHash, EmptyInputRejected) {
  EXPECT_THROW(embed_hash(""), EmptyInput);
  EXPECT_THROW(embed_hash("  \n\t"), EmptyInput);
  EXPECT_THROW(embed_hash("?!...,"), EmptyInput);
  EXPECT_THROW(embed_hash("word", 0), InvalidArgument);
}

TEST(EmbeddingVector, NormalizeAndFromUnit) {
  const auto v = EmbeddingVector::normalize({3.0, 4.0});
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  EXPECT_THROW(EmbeddingVector::normalize({0.0, 0.0}), ZeroVector);
  EXPECT_THROW(EmbeddingVector::from_unit({0.5, 0.5}), InvalidArgument);
  EXPECT_NO_THROW(EmbeddingVector::from_unit({0.6, 0.8}));
}

TEST(Cosine, Fixtures) {
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), -1.0);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.7071067812, 1e-10);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 2, 2}, std::vector<double>{2, 1, 2}), 8.0 / 9.0, 1e-12);
  EXPECT_THROW(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), DimensionMismatch);
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ZeroVector);
}

TEST(Cosine, SymmetricAndBounded) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> u(7), v(7);
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    const double c = cosine_similarity(u, v);
    EXPECT_EQ(c, cosine_similarity(v, u));
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

// ---------------------------------------------------------------------------
// Remote embedder against a local mock.

class RemoteEmbedderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    mock_.server().Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      last_body_ = req.body;
      if (failures_before_success_ > 0) {
        --failures_before_success_;
        res.status = 503;
        res.set_content("{}", "application/json");
        return;
      }
      res.status = status_;
      res.set_content(reply_, "application/json");
    });
    mock_.start();
  }

  RemoteEmbedderConfig config(std::size_t dim) {
    RemoteEmbedderConfig c;
    c.endpoint = mock_.url("/v1/embeddings");
    c.model = "mock-embed";
    c.dimension = dim;
    c.retry.max_retries = 2;
    c.retry.initial_backoff = std::chrono::milliseconds(1);
    c.retry.timeout = std::chrono::milliseconds(2000);
    return c;
  }

  testing::MockServer mock_;
  std::atomic<int> calls_{0};
  int failures_before_success_ = 0;
  int status_ = 200;
  std::string reply_ = R"({"data":[{"embedding":[3.0, 0.0, 4.0]}]})";
  std::string last_body_;
};

TEST_F(RemoteEmbedderTest, NormalizesResponse) {
  const RemoteEmbedder embedder(config(3));
  const auto v = embedder.embed("hello");
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[2], 0.8);
  EXPECT_EQ(embedder.mode(), "remote");
  const auto sent = nlohmann::json::parse(last_body_);
  EXPECT_EQ(sent["model"], "mock-embed");
  EXPECT_EQ(sent["input"][0], "hello");
}

TEST_F(RemoteEmbedderTest, DimensionMismatch) {
  const RemoteEmbedder embedder(config(4));
  EXPECT_THROW(embedder.embed("hello"), DimensionMismatch);
}

TEST_F(RemoteEmbedderTest, WhitespaceTextNeverSent) {
  const RemoteEmbedder embedder(config(3));
  EXPECT_THROW(embedder.embed("   "), EmptyInput);
  EXPECT_EQ(calls_.load(), 0);
}

TEST_F(RemoteEmbedderTest, MalformedResponsesAreProtocolErrors) {
  const RemoteEmbedder embedder(config(3));
  for (const char* body : {R"({"data":[]})", R"({"nope":1})", R"({"data":[{"embedding":["x"]}]})",
                           R"({"data":[{"embedding":[0,0,0]}]})", "not json"}) {
    reply_ = body;
    EXPECT_THROW(embedder.embed("hello"), ProtocolError) << body;
  }
}

TEST_F(RemoteEmbedderTest, RetriesServerErrorsThenSucceeds) {
  failures_before_success_ = 2;
  const RemoteEmbedder embedder(config(3));
  EXPECT_NO_THROW(embedder.embed("hello"));
  EXPECT_EQ(calls_.load(), 3);
}

TEST_F(RemoteEmbedderTest, GivesUpAfterRetries) {
  failures_before_success_ = 10;
  const RemoteEmbedder embedder(config(3));
  EXPECT_THROW(embedder.embed("hello"), TransportError);
  EXPECT_EQ(calls_.load(), 3);
}

TEST_F(RemoteEmbedderTest, AuthFailureIsNotRetried) {
  status_ = 401;
  const RemoteEmbedder embedder(config(3));
  EXPECT_THROW(embedder.embed("hello"), AuthError);
  EXPECT_EQ(calls_.load(), 1);
}

TEST(RemoteEmbedder, UnreachableEndpointIsTransportError) {
  int port;
  {
    testing::MockServer probe;
    probe.start();
    port = probe.port();
  }
  RemoteEmbedderConfig c;
  c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/embeddings";
  c.dimension = 3;
  c.retry.max_retries = 1;
  c.retry.initial_backoff = std::chrono::milliseconds(1);
  c.retry.timeout = std::chrono::milliseconds(500);
  const RemoteEmbedder embedder(c);
  try {
    embedder.embed("hello");
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find(c.endpoint), std::string::npos);
  }
}

TEST(RemoteEmbedder, RejectsBadConfiguration) {
  EXPECT_THROW(RemoteEmbedder(RemoteEmbedderConfig{}), InvalidArgument);
  RemoteEmbedderConfig c;
  c.endpoint = "ftp://example/x";
  EXPECT_THROW(RemoteEmbedder{c}, InvalidArgument);
}

}  // namespace
}  // namespace avllm
