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

// HTTP front end: POST /v1/ingest, POST /v1/query, GET /v1/health.
//
// Reads work on an immutable snapshot of the index; ingestion is serialized,
// builds a new index from a copy, persists it, and only then publishes it.
// A query therefore sees the index either entirely before or entirely after
// any ingest.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "avllm/config.hpp"
#include "avllm/embedder.hpp"
#include "avllm/error.hpp"
#include "avllm/rag.hpp"
#include "avllm/vector_store.hpp"

namespace avllm {

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return {status, {{"error_code", code}, {"message", message}}};
}

class QaService {
 public:
  QaService(ServiceConfig config, std::shared_ptr<const Embedder> embedder,
            std::shared_ptr<const Generator> generator,
            PromptTemplate tmpl = PromptTemplate::default_template())
      : config_(std::move(config)),
        embedder_(std::move(embedder)),
        generator_(std::move(generator)),
        template_(std::move(tmpl)) {
    config_.validate();
  }

  /// Loads the configured index file when present, otherwise starts empty.
  void initialize() {
    if (!config_.index_path.empty() && std::filesystem::exists(config_.index_path)) {
      initialize_with(load_index(config_.index_path));
    } else {
      initialize_with(VectorIndex(embedder_->dimension()));
    }
  }

  void initialize_with(VectorIndex index) {
    publish(std::make_shared<const VectorIndex>(std::move(index)));
    ready_.store(true);
  }

  bool ready() const noexcept { return ready_.load(); }
  const ServiceConfig& config() const noexcept { return config_; }

  std::shared_ptr<const VectorIndex> snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return index_;
  }

  HttpReply health() const {
    if (!ready()) return not_ready();
    const auto index = snapshot();
    return {200,
            {{"status", "ok"},
             {"index_records", index->size()},
             {"dimension", index->dimension()},
             {"embedder_mode", embedder_->mode()},
             {"generator_mode", generator_->mode()}}};
  }

  HttpReply ingest(std::string_view raw_body) {
    const auto body = parse_body(raw_body);
    if (!body) return error_reply(400, "INVALID_BODY", "body must be a JSON object");
    const auto doc_id = body->find("doc_id");
    const auto text = body->find("text");
    if (doc_id == body->end() || !doc_id->is_string() || doc_id->get_ref<const std::string&>().empty()) {
      return error_reply(400, "INVALID_BODY", "doc_id must be a non-empty string");
    }
    if (text == body->end() || !text->is_string()) {
      return error_reply(400, "INVALID_BODY", "text must be a string");
    }
    std::size_t size = kDefaultChunkSize;
    std::size_t overlap = kDefaultChunkOverlap;
    if (auto v = body->find("chunk_size"); v != body->end()) {
      if (!v->is_number_unsigned() || v->get<std::size_t>() == 0) {
        return error_reply(400, "INVALID_CHUNKING", "chunk_size must be a positive integer");
      }
      size = v->get<std::size_t>();
    }
    if (auto v = body->find("overlap"); v != body->end()) {
      if (!v->is_number_unsigned()) {
        return error_reply(400, "INVALID_CHUNKING", "overlap must be a non-negative integer");
      }
      overlap = v->get<std::size_t>();
    }
    if (!ready()) return not_ready();

    std::lock_guard writer(ingest_mu_);
    VectorIndex next = *snapshot();
    IngestSummary summary;
    try {
      summary = upsert(next, doc_id->get_ref<const std::string&>(), text->get_ref<const std::string&>(),
                       *embedder_, size, overlap);
    } catch (const InvalidChunking& e) {
      return error_reply(400, "INVALID_CHUNKING", e.what());
    } catch (const DimensionMismatch& e) {
      return error_reply(409, "DIMENSION_CONFLICT", e.what());
    } catch (const InvalidArgument& e) {
      return error_reply(400, "INVALID_BODY", e.what());
    } catch (const Error& e) {
      if (is_upstream(e)) return error_reply(502, "EMBED_UPSTREAM", e.what());
      return error_reply(500, "INTERNAL", e.what());
    }
    if (!config_.index_path.empty()) {
      try {
        persist(next, config_.index_path);
      } catch (const std::exception& e) {
        return error_reply(500, "PERSISTENCE_FAILURE", e.what());
      }
    }
    publish(std::make_shared<const VectorIndex>(std::move(next)));
    return {200, {{"chunks_added", summary.chunks_added}, {"chunks_skipped", summary.chunks_skipped}}};
  }

  HttpReply query(std::string_view raw_body) const {
    const auto body = parse_body(raw_body);
    if (!body) return error_reply(400, "INVALID_BODY", "body must be a JSON object");
    const auto question = body->find("question");
    if (question == body->end() || !question->is_string()) {
      return error_reply(400, "EMPTY_QUESTION", "question must be a non-empty string");
    }
    const std::string& q = question->get_ref<const std::string&>();
    if (q.find_first_not_of(" \t\r\n") == std::string::npos) {
      return error_reply(400, "EMPTY_QUESTION", "question is empty");
    }
    AnswerOptions options{config_.default_k, config_.min_score};
    if (auto v = body->find("k"); v != body->end() && !v->is_null()) {
      if (!v->is_number_integer() || v->get<long long>() < 1) {
        return error_reply(400, "INVALID_K", "k must be an integer >= 1");
      }
      options.k = v->get<std::size_t>();
    }
    if (auto v = body->find("min_score"); v != body->end() && !v->is_null()) {
      if (!v->is_number()) return error_reply(400, "INVALID_BODY", "min_score must be a number");
      options.min_score = v->get<double>();
    }
    if (!ready()) return not_ready();

    const auto index = snapshot();
    try {
      return {200, to_json(answer_question(q, options, *index, *embedder_, *generator_, template_))};
    } catch (const EmptyInput& e) {
      return error_reply(400, "UNEMBEDDABLE_QUESTION", e.what());
    } catch (const Error& e) {
      if (is_upstream(e) && e.stage() == "generate") return error_reply(502, "GEN_UPSTREAM", e.what());
      if (is_upstream(e) && e.stage() == "embed") return error_reply(502, "EMBED_UPSTREAM", e.what());
      return error_reply(500, "INTERNAL", e.what());
    } catch (const std::exception& e) {
      return error_reply(500, "INTERNAL", e.what());
    }
  }

  /// Registers the /v1 routes plus CORS and optional bearer-token checks.
  void mount(httplib::Server& server) {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      apply_cors(req, res);
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      if (!config_.api_token.empty() &&
          req.get_header_value("Authorization") != "Bearer " + config_.api_token) {
        write(res, error_reply(401, "UNAUTHORIZED", "missing or invalid bearer token"));
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) { write(res, health()); });
    server.Post("/v1/ingest",
                [this](const httplib::Request& req, httplib::Response& res) { write(res, ingest(req.body)); });
    server.Post("/v1/query",
                [this](const httplib::Request& req, httplib::Response& res) { write(res, query(req.body)); });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      write(res, error_reply(res.status, res.status == 404 ? "NOT_FOUND" : "HTTP_ERROR",
                             httplib::status_message(res.status)));
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "unexpected failure";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      write(res, error_reply(500, "INTERNAL", what));
    });
    server.set_read_timeout(config_.request_timeout);
    server.set_write_timeout(config_.request_timeout);
  }

 private:
  static HttpReply not_ready() {
    HttpReply r = error_reply(503, "NOT_READY", "index is still loading");
    r.body["status"] = "starting";
    return r;
  }

  static bool is_upstream(const Error& e) {
    return e.code() == ErrorCode::kTransport || e.code() == ErrorCode::kProtocol ||
           e.code() == ErrorCode::kAuth;
  }

  static std::optional<nlohmann::json> parse_body(std::string_view raw) {
    auto body = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (body.is_discarded() || !body.is_object()) return std::nullopt;
    return body;
  }

  static void write(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  }

  void apply_cors(const httplib::Request& req, httplib::Response& res) const {
    if (config_.cors_origins.empty()) return;
    const std::string origin = req.get_header_value("Origin");
    const bool any = std::find(config_.cors_origins.begin(), config_.cors_origins.end(), "*") !=
                     config_.cors_origins.end();
    if (!any && (origin.empty() || std::find(config_.cors_origins.begin(), config_.cors_origins.end(),
                                             origin) == config_.cors_origins.end())) {
      return;
    }
    res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
    if (!any) res.set_header("Vary", "Origin");
  }

  void publish(std::shared_ptr<const VectorIndex> index) {
    std::lock_guard lock(snapshot_mu_);
    index_ = std::move(index);
  }

  ServiceConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Generator> generator_;
  PromptTemplate template_;

  std::atomic<bool> ready_{false};
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const VectorIndex> index_;
  std::mutex ingest_mu_;
};

/// Owns the listening socket and the accept thread for a QaService.
class ServiceHost {
 public:
  explicit ServiceHost(QaService& service) { service.mount(server_); }
  ~ServiceHost() { stop(); }

  ServiceHost(const ServiceHost&) = delete;
  ServiceHost& operator=(const ServiceHost&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port_;
  }

  /// Serves on a background thread until stop().
  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  /// Blocks until the background thread started by start() exits.
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace avllm
