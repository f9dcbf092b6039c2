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

// Runtime settings read from AVLLM_* environment variables, and factories
// for the configured embedder and generator.

#include <chrono>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "avllm/embedder.hpp"
#include "avllm/error.hpp"
#include "avllm/http_client.hpp"
#include "avllm/rag.hpp"

namespace avllm {

struct EnvVar {
  std::string_view name;
  std::string_view help;
};

inline constexpr EnvVar kEnvVars[] = {
    {"AVLLM_INDEX_PATH", "index file (default avllm_index.jsonl)"},
    {"AVLLM_EMBEDDER", "embedder mode: hash | remote (default hash)"},
    {"AVLLM_EMBED_URL", "remote embeddings endpoint URL"},
    {"AVLLM_EMBED_MODEL", "remote embedding model name"},
    {"AVLLM_EMBED_DIM", "embedding dimension (default 256)"},
    {"AVLLM_GEN", "generator mode: stub | remote (default stub)"},
    {"AVLLM_GEN_URL", "remote chat-completions endpoint URL"},
    {"AVLLM_GEN_MODEL", "remote generation model name"},
    {"AVLLM_GEN_KEY", "bearer key sent to the remote generator"},
    {"AVLLM_TOPK", "passages retrieved per question (default 4)"},
    {"AVLLM_MIN_SCORE", "drop passages scoring below this cosine (default none)"},
    {"AVLLM_HTTP_RETRIES", "retries for remote calls (default 2)"},
    {"AVLLM_HTTP_TIMEOUT_MS", "per-call timeout for remote calls (default 30000)"},
    {"AVLLM_ADDR", "serve: bind address host:port (default 127.0.0.1:8080)"},
    {"AVLLM_CORS_ORIGIN", "serve: comma-separated allowed origins, or *"},
    {"AVLLM_API_TOKEN", "serve: when set, requests need 'Authorization: Bearer <token>'"},
    {"AVLLM_REQUEST_TIMEOUT_S", "serve: read/write timeout per request (default 30)"},
};

inline std::optional<std::string> getenv_nonempty(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

namespace detail {

template <typename T>
T parse_number(const std::string& text, std::string_view what) {
  std::size_t used = 0;
  T value{};
  try {
    if constexpr (std::is_floating_point_v<T>) {
      value = static_cast<T>(std::stod(text, &used));
    } else {
      const long long v = std::stoll(text, &used);
      if (v < 0) throw std::out_of_range("negative");
      value = static_cast<T>(v);
    }
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw InvalidArgument(std::string(what) + ": cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace detail

struct EmbedderSettings {
  std::string mode = "hash";
  std::string url;
  std::string model;
  std::size_t dimension = kDefaultDimension;

  static EmbedderSettings from_env() {
    EmbedderSettings s;
    if (auto v = getenv_nonempty("AVLLM_EMBEDDER")) s.mode = *v;
    if (auto v = getenv_nonempty("AVLLM_EMBED_URL")) s.url = *v;
    if (auto v = getenv_nonempty("AVLLM_EMBED_MODEL")) s.model = *v;
    if (auto v = getenv_nonempty("AVLLM_EMBED_DIM")) {
      s.dimension = detail::parse_number<std::size_t>(*v, "AVLLM_EMBED_DIM");
    }
    return s;
  }
};

struct GeneratorSettings {
  std::string mode = "stub";
  std::string url;
  std::string model;
  std::string api_key;

  static GeneratorSettings from_env() {
    GeneratorSettings s;
    if (auto v = getenv_nonempty("AVLLM_GEN")) s.mode = *v;
    if (auto v = getenv_nonempty("AVLLM_GEN_URL")) s.url = *v;
    if (auto v = getenv_nonempty("AVLLM_GEN_MODEL")) s.model = *v;
    if (auto v = getenv_nonempty("AVLLM_GEN_KEY")) s.api_key = *v;
    return s;
  }
};

inline http::RetryPolicy retry_policy_from_env() {
  http::RetryPolicy p;
  if (auto v = getenv_nonempty("AVLLM_HTTP_RETRIES")) {
    p.max_retries = detail::parse_number<int>(*v, "AVLLM_HTTP_RETRIES");
  }
  if (auto v = getenv_nonempty("AVLLM_HTTP_TIMEOUT_MS")) {
    p.timeout = std::chrono::milliseconds(detail::parse_number<long long>(*v, "AVLLM_HTTP_TIMEOUT_MS"));
  }
  return p;
}

inline std::unique_ptr<Embedder> make_embedder(const EmbedderSettings& s,
                                               const http::RetryPolicy& retry = {}) {
  if (s.mode == "hash") return std::make_unique<HashEmbedder>(s.dimension);
  if (s.mode == "remote") {
    return std::make_unique<RemoteEmbedder>(RemoteEmbedderConfig{s.url, s.model, s.dimension, retry});
  }
  throw InvalidArgument("unknown embedder mode '" + s.mode + "' (expected hash or remote)");
}

inline std::unique_ptr<Generator> make_generator(const GeneratorSettings& s,
                                                 const http::RetryPolicy& retry = {}) {
  if (s.mode == "stub") return std::make_unique<StubGenerator>();
  if (s.mode == "remote") {
    return std::make_unique<RemoteGenerator>(RemoteGeneratorConfig{s.url, s.model, s.api_key, retry});
  }
  throw InvalidArgument("unknown generator mode '" + s.mode + "' (expected stub or remote)");
}

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

inline BindAddress parse_bind_address(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw InvalidArgument("address '" + std::string(text) + "' is not host:port");
  }
  BindAddress a;
  a.host = std::string(text.substr(0, colon));
  const auto port = detail::parse_number<long long>(std::string(text.substr(colon + 1)), "port");
  if (port > 65535) throw InvalidArgument("port out of range in '" + std::string(text) + "'");
  a.port = static_cast<int>(port);
  return a;
}

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

struct ServiceConfig {
  BindAddress bind;
  std::string index_path = "avllm_index.jsonl";  // empty: memory only
  EmbedderSettings embedder;
  GeneratorSettings generator;
  http::RetryPolicy retry;
  std::size_t default_k = kDefaultTopK;
  std::optional<double> min_score;
  std::chrono::seconds request_timeout{30};
  std::vector<std::string> cors_origins;
  std::string api_token;

  static ServiceConfig from_env() {
    ServiceConfig c;
    if (auto v = getenv_nonempty("AVLLM_ADDR")) c.bind = parse_bind_address(*v);
    if (auto v = getenv_nonempty("AVLLM_INDEX_PATH")) c.index_path = *v;
    c.embedder = EmbedderSettings::from_env();
    c.generator = GeneratorSettings::from_env();
    c.retry = retry_policy_from_env();
    if (auto v = getenv_nonempty("AVLLM_TOPK")) c.default_k = detail::parse_number<std::size_t>(*v, "AVLLM_TOPK");
    if (auto v = getenv_nonempty("AVLLM_MIN_SCORE")) c.min_score = detail::parse_number<double>(*v, "AVLLM_MIN_SCORE");
    if (auto v = getenv_nonempty("AVLLM_REQUEST_TIMEOUT_S")) {
      c.request_timeout = std::chrono::seconds(detail::parse_number<long long>(*v, "AVLLM_REQUEST_TIMEOUT_S"));
    }
    if (auto v = getenv_nonempty("AVLLM_CORS_ORIGIN")) c.cors_origins = split_list(*v);
    if (auto v = getenv_nonempty("AVLLM_API_TOKEN")) c.api_token = *v;
    c.validate();
    return c;
  }

  void validate() const {
    if (default_k < 1) throw InvalidArgument("default k must be >= 1");
    if (embedder.mode != "hash" && embedder.mode != "remote") {
      throw InvalidArgument("unknown embedder mode '" + embedder.mode + "'");
    }
    if (generator.mode != "stub" && generator.mode != "remote") {
      throw InvalidArgument("unknown generator mode '" + generator.mode + "'");
    }
  }
};

}  // namespace avllm
