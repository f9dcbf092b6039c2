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

// Newline-delimited JSON reading with 1-based line numbers in errors.

#include <cstddef>
#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "avllm/error.hpp"

namespace avllm::jsonl {

using Json = nlohmann::json;

// Calls `fn(object, line_number)` for every non-blank line. Lines that are not
// JSON objects raise FormatError naming the line.
inline void for_each_object(std::istream& in,
                            const std::function<void(const Json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json obj = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) throw FormatError("invalid JSON", line_no);
    if (!obj.is_object()) throw FormatError("expected a JSON object", line_no);
    fn(obj, line_no);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

inline const std::string& require_string(const Json& obj, std::string_view key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError("missing field '" + std::string(key) + "'", line);
  if (!it->is_string()) throw FormatError("field '" + std::string(key) + "' must be a string", line);
  return it->get_ref<const std::string&>();
}

inline double require_number(const Json& obj, std::string_view key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError("missing field '" + std::string(key) + "'", line);
  if (!it->is_number()) throw FormatError("field '" + std::string(key) + "' must be a number", line);
  return it->get<double>();
}

}  // namespace avllm::jsonl
