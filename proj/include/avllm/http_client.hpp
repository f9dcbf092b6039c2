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

// JSON-over-HTTP POST with per-call timeout and retry with exponential
// backoff. Shared by the remote embedder and the remote generator.

#include <chrono>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "avllm/error.hpp"

namespace avllm::http {

using Json = nlohmann::json;

struct RetryPolicy {
  int max_retries = 2;  // attempts = max_retries + 1
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds timeout{30000};
};

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

inline Url parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) {
    throw InvalidArgument("endpoint '" + std::string(url) + "' is not an absolute URL");
  }
  const std::string_view scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw InvalidArgument("unsupported URL scheme in '" + std::string(url) + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Url out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
    out.path = "/";
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  if (out.origin.size() <= scheme_end + 3) {
    throw InvalidArgument("endpoint '" + std::string(url) + "' has no host");
  }
  return out;
}

/// POSTs `body` to `url` and returns the parsed JSON response.
/// Connection failures, timeouts, 429 and 5xx are retried; once attempts are
/// exhausted a TransportError naming the endpoint is raised. 401/403 raise
/// AuthError, other non-2xx statuses and unparseable bodies ProtocolError.
inline Json post_json(const std::string& url, const Json& body, const httplib::Headers& headers,
                      const RetryPolicy& policy) {
  const Url target = parse_url(url);
  const std::string payload = body.dump();
  std::string last_failure;
  auto backoff = policy.initial_backoff;

  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(target.origin);
    client.set_connection_timeout(policy.timeout);
    client.set_read_timeout(policy.timeout);
    client.set_write_timeout(policy.timeout);
    auto res = client.Post(target.path, headers, payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw AuthError("POST " + url + " rejected with HTTP " + std::to_string(status));
    }
    if (status == 429 || status >= 500) {
      last_failure = "HTTP " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      throw ProtocolError("POST " + url + " returned HTTP " + std::to_string(status));
    }
    Json parsed = Json::parse(res->body, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) throw ProtocolError("POST " + url + " returned invalid JSON");
    return parsed;
  }
  throw TransportError("POST " + url + " failed after " + std::to_string(policy.max_retries + 1) +
                       " attempt(s): " + last_failure);
}

}  // namespace avllm::http
