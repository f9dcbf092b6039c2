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

// Preference dataset file: one JSON object per line with string fields
// prompt_id, prompt_text, preferred_text, dispreferred_text.

#include <istream>
#include <string>

#include "avllm/dpo.hpp"
#include "avllm/jsonl.hpp"

namespace avllm::dpo {

inline PreferenceDataset read_preference_dataset(std::istream& in) {
  PreferenceDataset dataset;
  jsonl::for_each_object(in, [&](const jsonl::Json& obj, std::size_t line) {
    const auto& prompt_id = jsonl::require_string(obj, "prompt_id", line);
    const auto& prompt_text = jsonl::require_string(obj, "prompt_text", line);
    const auto& preferred = jsonl::require_string(obj, "preferred_text", line);
    const auto& dispreferred = jsonl::require_string(obj, "dispreferred_text", line);
    if (preferred == dispreferred) {
      throw FormatError("preferred_text equals dispreferred_text", line);
    }
    dataset.add(prompt_id, prompt_text, preferred, dispreferred);
  });
  return dataset;
}

inline PreferenceDataset load_preference_dataset(const std::string& path) {
  auto in = jsonl::open_input(path);
  return read_preference_dataset(in);
}

}  // namespace avllm::dpo
