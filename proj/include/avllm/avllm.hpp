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

#include "avllm/config.hpp"
#include "avllm/dpo.hpp"
#include "avllm/embedder.hpp"
#include "avllm/error.hpp"
#include "avllm/eval.hpp"
#include "avllm/preference_io.hpp"
#include "avllm/rag.hpp"
#include "avllm/service.hpp"
#include "avllm/vector_store.hpp"
