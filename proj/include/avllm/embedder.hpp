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

#pragma once

// Text embedders. HashEmbedder is a bit-exact signed feature-hash sketch of
// unigram and bigram counts; RemoteEmbedder calls an embeddings-API
// compatible service. Both return unit-norm vectors.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avllm/error.hpp"
#include "avllm/http_client.hpp"
#include "avllm/utf8.hpp"

namespace avllm {

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr std::size_t kDefaultDimension = 256;

class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  /// Scales `raw` to unit L2 norm.
  static EmbeddingVector normalize(std::vector<double> raw) {
    double sq = 0.0;
    for (double v : raw) {
      if (!std::isfinite(v)) throw InvalidArgument("embedding contains a non-finite value");
      sq += v * v;
    }
    if (raw.empty() || sq == 0.0) throw ZeroVector("embedding has zero norm");
    const double norm = std::sqrt(sq);
    for (double& v : raw) v /= norm;
    return EmbeddingVector(std::move(raw));
  }

  /// Adopts `values` verbatim; they must already have unit norm.
  static EmbeddingVector from_unit(std::vector<double> values) {
    double sq = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) throw InvalidArgument("embedding contains a non-finite value");
      sq += v * v;
    }
    if (values.empty() || std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
      throw InvalidArgument("embedding is not unit-norm");
    }
    return EmbeddingVector(std::move(values));
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Throws EmptyInput when the text yields nothing to embed.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const noexcept = 0;
  virtual std::string_view mode() const noexcept = 0;
};

// ---------------------------------------------------------------------------
// Hash embedder.

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
inline constexpr char kBigramSeparator = '\x1F';

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

/// Maximal runs of token characters, lowercased, UTF-8 encoded.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_token_char(cp)) {
      utf8::append(current, utf8::to_lower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Unigrams followed by adjacent bigrams joined with U+001F.
inline std::vector<std::string> hash_features(std::string_view text) {
  auto tokens = tokenize(text);
  std::vector<std::string> features = tokens;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    features.push_back(tokens[i] + kBigramSeparator + tokens[i + 1]);
  }
  return features;
}

/// bucket = h mod d, sign = +1 when bit 63 of h is set and -1 otherwise,
/// summed per feature occurrence and L2-normalized.
inline EmbeddingVector embed_hash(std::string_view text, std::size_t dimension = kDefaultDimension) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
  const auto features = hash_features(text);
  if (features.empty()) throw EmptyInput("text contains no alphanumeric token");
  std::vector<double> acc(dimension, 0.0);
  for (const auto& f : features) {
    const std::uint64_t h = fnv1a64(f);
    acc[h % dimension] += (h >> 63) != 0 ? 1.0 : -1.0;
  }
  return EmbeddingVector::normalize(std::move(acc));
}

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {
    if (dimension_ == 0) throw InvalidArgument("embedding dimension must be positive");
  }
  EmbeddingVector embed(std::string_view text) const override { return embed_hash(text, dimension_); }
  std::size_t dimension() const noexcept override { return dimension_; }
  std::string_view mode() const noexcept override { return "hash"; }

 private:
  std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Remote embedder. Request {model, input:[text]}; response
// {data:[{embedding:[number]}]}.

/// Embeds via the remote service and re-normalizes locally. When
/// `expected_dimension` is set, a vector of another length raises
/// DimensionMismatch.
inline EmbeddingVector embed_remote(std::string_view text, const std::string& endpoint,
                                    const std::string& model_name,
                                    std::optional<std::size_t> expected_dimension = std::nullopt,
                                    const http::RetryPolicy& retry = {}) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw EmptyInput("text is empty");
  }
  http::Json body = {{"model", model_name}, {"input", http::Json::array({std::string(text)})}};
  const http::Json response = http::post_json(endpoint, body, {}, retry);

  const auto data = response.find("data");
  if (data == response.end() || !data->is_array() || data->empty()) {
    throw ProtocolError("embedding response from " + endpoint + " has no 'data' entries");
  }
  const auto& first = (*data)[0];
  const auto emb = first.is_object() ? first.find("embedding") : first.end();
  if (!first.is_object() || emb == first.end() || !emb->is_array() || emb->empty()) {
    throw ProtocolError("embedding response from " + endpoint + " lacks data[0].embedding");
  }
  std::vector<double> raw;
  raw.reserve(emb->size());
  for (const auto& v : *emb) {
    if (!v.is_number()) throw ProtocolError("embedding from " + endpoint + " has a non-numeric entry");
    raw.push_back(v.get<double>());
  }
  if (expected_dimension && raw.size() != *expected_dimension) {
    throw DimensionMismatch("embedding from " + endpoint + " has dimension " +
                            std::to_string(raw.size()) + ", expected " +
                            std::to_string(*expected_dimension));
  }
  try {
    return EmbeddingVector::normalize(std::move(raw));
  } catch (const Error& e) {
    throw ProtocolError("embedding from " + endpoint + " is unusable: " + e.what());
  }
}

struct RemoteEmbedderConfig {
  std::string endpoint;
  std::string model;
  std::size_t dimension = kDefaultDimension;
  http::RetryPolicy retry;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw InvalidArgument("remote embedder needs an endpoint URL");
    (void)http::parse_url(config_.endpoint);
    if (config_.dimension == 0) throw InvalidArgument("embedding dimension must be positive");
  }

  EmbeddingVector embed(std::string_view text) const override {
    return embed_remote(text, config_.endpoint, config_.model, config_.dimension, config_.retry);
  }
  std::size_t dimension() const noexcept override { return config_.dimension; }
  std::string_view mode() const noexcept override { return "remote"; }

 private:
  RemoteEmbedderConfig config_;
};

}  // namespace avllm
