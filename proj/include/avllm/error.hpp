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

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avllm {

enum class ErrorCode {
  kInvalidArgument,
  kUnknownPrompt,
  kUnknownResponse,
  kEmptyDataset,
  kNonFiniteLoss,
  kEmptyInput,
  kZeroVector,
  kDimensionMismatch,
  kInvalidChunking,
  kInvalidTemplate,
  kFormat,
  kVersion,
  kIo,
  kTransport,
  kProtocol,
  kAuth,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownPrompt: return "UnknownPrompt";
    case ErrorCode::kUnknownResponse: return "UnknownResponse";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidChunking: return "InvalidChunking";
    case ErrorCode::kInvalidTemplate: return "InvalidTemplate";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kVersion: return "VersionError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kTransport: return "TransportError";
    case ErrorCode::kProtocol: return "ProtocolError";
    case ErrorCode::kAuth: return "AuthError";
  }
  return "Unknown";
}

// Base of every error raised by the library. `stage` is filled in by the
// pipeline when an error crosses a stage boundary (embed, retrieve, generate).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(line ? "line " + std::to_string(*line) + ": " + message
                                : message),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string stage_;
};

template <ErrorCode C>
class TypedError : public Error {
 public:
  explicit TypedError(const std::string& message,
                      std::optional<std::size_t> line = std::nullopt)
      : Error(C, message, line) {}
};

using InvalidArgument = TypedError<ErrorCode::kInvalidArgument>;
using UnknownPrompt = TypedError<ErrorCode::kUnknownPrompt>;
using UnknownResponse = TypedError<ErrorCode::kUnknownResponse>;
using EmptyDataset = TypedError<ErrorCode::kEmptyDataset>;
using NonFiniteLoss = TypedError<ErrorCode::kNonFiniteLoss>;
using EmptyInput = TypedError<ErrorCode::kEmptyInput>;
using ZeroVector = TypedError<ErrorCode::kZeroVector>;
using DimensionMismatch = TypedError<ErrorCode::kDimensionMismatch>;
using InvalidChunking = TypedError<ErrorCode::kInvalidChunking>;
using InvalidTemplate = TypedError<ErrorCode::kInvalidTemplate>;
using FormatError = TypedError<ErrorCode::kFormat>;
using VersionError = TypedError<ErrorCode::kVersion>;
using IoError = TypedError<ErrorCode::kIo>;
using TransportError = TypedError<ErrorCode::kTransport>;
using ProtocolError = TypedError<ErrorCode::kProtocol>;
using AuthError = TypedError<ErrorCode::kAuth>;

}  // namespace avllm
