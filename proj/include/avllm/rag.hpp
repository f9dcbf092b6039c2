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

// Retrieval-augmented answering: embed the question, retrieve the top-k
// passages, substitute them into a prompt template and hand the prompt to a
// generator.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avllm/embedder.hpp"
#include "avllm/error.hpp"
#include "avllm/http_client.hpp"
#include "avllm/utf8.hpp"
#include "avllm/vector_store.hpp"

namespace avllm {

inline constexpr std::string_view kDefaultTemplate =
    "Answer the question using only the context below. Cite passage numbers.\n\n"
    "Context:\n{context}\n\nQuestion: {question}\nAnswer:";
inline constexpr std::string_view kNoContextLine = "(no context available)";
inline constexpr std::string_view kNoContextAnswer = "No context available.";
inline constexpr std::size_t kSnippetLength = 160;
inline constexpr std::size_t kDefaultTopK = 4;

/// Template text with exactly one {context} and one {question}.
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string text) {
    PromptTemplate t;
    t.context_pos_ = locate_once(text, kContext);
    t.question_pos_ = locate_once(text, kQuestion);
    t.text_ = std::move(text);
    return t;
  }

  static const PromptTemplate& default_template() {
    static const PromptTemplate t = parse(std::string(kDefaultTemplate));
    return t;
  }

  const std::string& text() const noexcept { return text_; }

  /// Single-pass substitution; placeholder-like text inside the values is
  /// left alone.
  std::string render(std::string_view context, std::string_view question) const {
    struct Slot {
      std::size_t pos, len;
      std::string_view value;
    };
    Slot first{context_pos_, kContext.size(), context};
    Slot second{question_pos_, kQuestion.size(), question};
    if (second.pos < first.pos) std::swap(first, second);
    std::string out;
    out.reserve(text_.size() + context.size() + question.size());
    out.append(text_, 0, first.pos);
    out.append(first.value);
    out.append(text_, first.pos + first.len, second.pos - first.pos - first.len);
    out.append(second.value);
    out.append(text_, second.pos + second.len);
    return out;
  }

 private:
  static constexpr std::string_view kContext = "{context}";
  static constexpr std::string_view kQuestion = "{question}";

  static std::size_t locate_once(const std::string& text, std::string_view placeholder) {
    const auto pos = text.find(placeholder);
    if (pos == std::string::npos) {
      throw InvalidTemplate("template lacks placeholder " + std::string(placeholder));
    }
    if (text.find(placeholder, pos + 1) != std::string::npos) {
      throw InvalidTemplate("template repeats placeholder " + std::string(placeholder));
    }
    return pos;
  }

  std::string text_;
  std::size_t context_pos_ = 0;
  std::size_t question_pos_ = 0;
};

namespace detail {

// Passages occupy one prompt line each.
inline std::string single_line(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

}  // namespace detail

/// {context} becomes "[i] <passage>" lines in rank order, or the no-context
/// line when there are no passages; {question} is inserted verbatim.
inline std::string build_prompt(std::string_view question, const std::vector<RetrievalHit>& passages,
                                const PromptTemplate& tmpl = PromptTemplate::default_template()) {
  std::string context;
  if (passages.empty()) {
    context = kNoContextLine;
  } else {
    for (std::size_t i = 0; i < passages.size(); ++i) {
      if (i > 0) context += '\n';
      context += '[' + std::to_string(i + 1) + "] " + detail::single_line(passages[i].text);
    }
  }
  return tmpl.render(context, question);
}

// ---------------------------------------------------------------------------
// Generators.

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string generate(std::string_view prompt) const = 0;
  virtual std::string_view mode() const noexcept = 0;
};

/// Deterministic stand-in: echoes the start of passage [1], if any.
inline std::string generate_stub(std::string_view prompt) {
  static constexpr std::string_view kMarker = "[1] ";
  for (std::size_t pos = prompt.find(kMarker); pos != std::string_view::npos;
       pos = prompt.find(kMarker, pos + 1)) {
    if (pos != 0 && prompt[pos - 1] != '\n') continue;
    const std::size_t begin = pos + kMarker.size();
    const std::size_t end = prompt.find('\n', begin);
    const std::string_view block =
        prompt.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin);
    return "Based on [1]: " + utf8::prefix(block, kSnippetLength);
  }
  return std::string(kNoContextAnswer);
}

class StubGenerator final : public Generator {
 public:
  std::string generate(std::string_view prompt) const override { return generate_stub(prompt); }
  std::string_view mode() const noexcept override { return "stub"; }
};

/// Chat-completions request {model, messages:[{role:"user", content}]};
/// returns choices[0].message.content.
inline std::string generate_remote(std::string_view prompt, const std::string& endpoint,
                                   const std::string& model_name, const std::string& api_key,
                                   const http::RetryPolicy& retry = {}) {
  http::Json body = {
      {"model", model_name},
      {"messages", http::Json::array({{{"role", "user"}, {"content", std::string(prompt)}}})}};
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const http::Json response = http::post_json(endpoint, body, headers, retry);

  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) {
    throw ProtocolError("chat response from " + endpoint + " has no choices");
  }
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) {
    throw ProtocolError("chat response from " + endpoint + " lacks choices[0].message");
  }
  const auto& message = first["message"];
  const auto content = message.find("content");
  if (content == message.end() || !content->is_string()) {
    throw ProtocolError("chat response from " + endpoint + " lacks message content");
  }
  return content->get<std::string>();
}

struct RemoteGeneratorConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
  http::RetryPolicy retry;
};

class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(RemoteGeneratorConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw InvalidArgument("remote generator needs an endpoint URL");
    (void)http::parse_url(config_.endpoint);
  }
  std::string generate(std::string_view prompt) const override {
    return generate_remote(prompt, config_.endpoint, config_.model, config_.api_key, config_.retry);
  }
  std::string_view mode() const noexcept override { return "remote"; }

 private:
  RemoteGeneratorConfig config_;
};

// ---------------------------------------------------------------------------
// Pipeline.

struct Citation {
  ChunkId chunk_id = 0;
  std::string doc_id;
  double score = 0.0;
  std::string snippet;

  friend bool operator==(const Citation&, const Citation&) = default;
};

struct Answer {
  std::string text;
  std::vector<Citation> citations;  // rank order
  bool grounded = false;
  std::size_t retrieval_k = 0;
};

struct AnswerOptions {
  std::size_t k = kDefaultTopK;
  std::optional<double> min_score;
};

namespace detail {

template <typename F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

}  // namespace detail

/// Errors leaving this function carry stage "embed", "retrieve" or
/// "generate".
inline Answer answer_question(std::string_view question, const AnswerOptions& options,
                              const VectorIndex& index, const Embedder& embedder,
                              const Generator& generator,
                              const PromptTemplate& tmpl = PromptTemplate::default_template()) {
  if (options.k == 0) throw InvalidArgument("k must be >= 1");
  const EmbeddingVector query = detail::in_stage("embed", [&] { return embedder.embed(question); });
  auto hits = detail::in_stage("retrieve", [&] { return search_topk(index, query, options.k); });
  if (options.min_score) {
    std::erase_if(hits, [&](const RetrievalHit& h) { return h.score < *options.min_score; });
  }
  const std::string prompt = build_prompt(question, hits, tmpl);

  Answer answer;
  answer.text = detail::in_stage("generate", [&] { return generator.generate(prompt); });
  answer.retrieval_k = options.k;
  answer.citations.reserve(hits.size());
  for (const auto& h : hits) {
    answer.citations.push_back({h.chunk_id, h.doc_id, h.score, utf8::prefix(h.text, kSnippetLength)});
  }
  answer.grounded = !answer.citations.empty();
  return answer;
}

/// Wire form shared by POST /v1/query and `query --json`.
inline nlohmann::json to_json(const Answer& answer) {
  nlohmann::json citations = nlohmann::json::array();
  for (const auto& c : answer.citations) {
    citations.push_back(
        {{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id}, {"score", c.score}, {"snippet", c.snippet}});
  }
  return {{"answer", answer.text}, {"grounded", answer.grounded}, {"citations", citations}};
}

}  // namespace avllm
