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

// Evaluation arithmetic over judge output: pairwise win/lose/tie tallies with
// both win-rate conventions, and per-model means of expert scores.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "avllm/error.hpp"
#include "avllm/jsonl.hpp"

namespace avllm::eval {

enum class Verdict { kWin, kLose, kTie };

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "win") return Verdict::kWin;
  if (s == "lose") return Verdict::kLose;
  if (s == "tie") return Verdict::kTie;
  return std::nullopt;
}

/// Verdict from the perspective of model A.
struct PairwiseJudgment {
  std::string item_id;
  Verdict verdict = Verdict::kTie;
};

struct TallyReport {
  std::size_t win = 0;
  std::size_t lose = 0;
  std::size_t tie = 0;
  double win_rate_including_ties = 0.0;               // win / (win + lose + tie)
  std::optional<double> win_rate_excluding_ties;      // win / (win + lose); absent if 0/0

  std::size_t total() const noexcept { return win + lose + tie; }
};

inline TallyReport tally_from_counts(std::size_t win, std::size_t lose, std::size_t tie) {
  if (win + lose + tie == 0) throw EmptyInput("no judgments to tally");
  TallyReport r{win, lose, tie, 0.0, std::nullopt};
  r.win_rate_including_ties = static_cast<double>(win) / static_cast<double>(win + lose + tie);
  if (win + lose > 0) {
    r.win_rate_excluding_ties = static_cast<double>(win) / static_cast<double>(win + lose);
  }
  return r;
}

inline TallyReport pairwise_tally(std::span<const PairwiseJudgment> judgments) {
  std::size_t win = 0, lose = 0, tie = 0;
  for (const auto& j : judgments) {
    switch (j.verdict) {
      case Verdict::kWin: ++win; break;
      case Verdict::kLose: ++lose; break;
      case Verdict::kTie: ++tie; break;
    }
  }
  return tally_from_counts(win, lose, tie);
}

inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 5.0;

struct ScoreRecord {
  std::string model_tag;
  std::string item_id;
  double fluency = 0.0;
  double accuracy = 0.0;
  double timeliness = 0.0;
};

struct ModelScores {
  std::string model_tag;
  std::size_t count = 0;
  double fluency = 0.0;
  double accuracy = 0.0;
  double timeliness = 0.0;
  double total = 0.0;  // sum of the three means
};

/// Per-model dimension means, models in order of first appearance.
inline std::vector<ModelScores> expert_score_aggregate(std::span<const ScoreRecord> records) {
  if (records.empty()) throw EmptyInput("no score records to aggregate");
  std::vector<ModelScores> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, inserted] = slot.try_emplace(r.model_tag, out.size());
    if (inserted) out.push_back({r.model_tag});
    ModelScores& m = out[it->second];
    ++m.count;
    m.fluency += r.fluency;
    m.accuracy += r.accuracy;
    m.timeliness += r.timeliness;
  }
  for (auto& m : out) {
    const auto n = static_cast<double>(m.count);
    m.fluency /= n;
    m.accuracy /= n;
    m.timeliness /= n;
    m.total = m.fluency + m.accuracy + m.timeliness;
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats: judgments {item_id, verdict}; scores {model_tag, item_id,
// fluency, accuracy, timeliness}.

inline std::vector<PairwiseJudgment> read_judgments(std::istream& in) {
  std::vector<PairwiseJudgment> out;
  jsonl::for_each_object(in, [&](const jsonl::Json& obj, std::size_t line) {
    PairwiseJudgment j;
    j.item_id = jsonl::require_string(obj, "item_id", line);
    const auto& v = jsonl::require_string(obj, "verdict", line);
    auto verdict = parse_verdict(v);
    if (!verdict) throw FormatError("verdict must be win, lose or tie; got '" + v + "'", line);
    j.verdict = *verdict;
    out.push_back(std::move(j));
  });
  return out;
}

inline std::vector<ScoreRecord> read_scores(std::istream& in) {
  std::vector<ScoreRecord> out;
  jsonl::for_each_object(in, [&](const jsonl::Json& obj, std::size_t line) {
    ScoreRecord r;
    r.model_tag = jsonl::require_string(obj, "model_tag", line);
    r.item_id = jsonl::require_string(obj, "item_id", line);
    auto score = [&](std::string_view key) {
      const double v = jsonl::require_number(obj, key, line);
      if (!(v >= kMinScore && v <= kMaxScore)) {
        throw FormatError("score '" + std::string(key) + "' outside [0, 5]", line);
      }
      return v;
    };
    r.fluency = score("fluency");
    r.accuracy = score("accuracy");
    r.timeliness = score("timeliness");
    out.push_back(std::move(r));
  });
  return out;
}

inline std::vector<PairwiseJudgment> load_judgments(const std::string& path) {
  auto in = jsonl::open_input(path);
  return read_judgments(in);
}

inline std::vector<ScoreRecord> load_scores(const std::string& path) {
  auto in = jsonl::open_input(path);
  return read_scores(in);
}

// ---------------------------------------------------------------------------
// Seeded sampling. Uses mt19937_64 output directly (no std distributions) so
// the selection is identical across standard library implementations.

namespace detail {

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace detail

/// Chooses min(n, size) items without replacement; survivors keep their
/// original relative order.
template <typename T>
std::vector<T> sample(const std::vector<T>& items, std::size_t n, std::uint64_t seed) {
  if (n >= items.size()) return items;
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + detail::uniform_below(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

/// Samples up to n records per model_tag.
inline std::vector<ScoreRecord> sample_per_model(const std::vector<ScoreRecord>& records,
                                                 std::size_t n, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_model;
  for (std::size_t i = 0; i < records.size(); ++i) by_model[records[i].model_tag].push_back(i);
  std::vector<std::size_t> keep;
  for (const auto& [tag, positions] : by_model) {
    for (auto p : sample(positions, n, seed)) keep.push_back(p);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<ScoreRecord> out;
  out.reserve(keep.size());
  for (auto p : keep) out.push_back(records[p]);
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

inline std::string format_tally(const TallyReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "win" << std::right << std::setw(8) << r.win << '\n'
     << std::left << std::setw(28) << "lose" << std::right << std::setw(8) << r.lose << '\n'
     << std::left << std::setw(28) << "tie" << std::right << std::setw(8) << r.tie << '\n'
     << std::left << std::setw(28) << "total" << std::right << std::setw(8) << r.total() << '\n'
     << std::fixed << std::setprecision(4)
     << std::left << std::setw(28) << "win rate (including ties)" << std::right << std::setw(8)
     << r.win_rate_including_ties << '\n'
     << std::left << std::setw(28) << "win rate (excluding ties)" << std::right << std::setw(8);
  if (r.win_rate_excluding_ties) {
    os << *r.win_rate_excluding_ties;
  } else {
    os << "n/a";
  }
  os << '\n';
  return os.str();
}

inline std::string format_scores(const std::vector<ModelScores>& rows) {
  std::size_t tag_width = 5;
  for (const auto& m : rows) tag_width = std::max(tag_width, m.model_tag.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(tag_width)) << "model" << std::right
     << std::setw(7) << "n" << std::setw(10) << "fluency" << std::setw(10) << "accuracy"
     << std::setw(12) << "timeliness" << std::setw(9) << "total" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& m : rows) {
    os << std::left << std::setw(static_cast<int>(tag_width)) << m.model_tag << std::right
       << std::setw(7) << m.count << std::setw(10) << m.fluency << std::setw(10) << m.accuracy
       << std::setw(12) << m.timeliness << std::setw(9) << m.total << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const TallyReport& r) {
  return {{"win", r.win},
          {"lose", r.lose},
          {"tie", r.tie},
          {"total", r.total()},
          {"win_rate_including_ties", r.win_rate_including_ties},
          {"win_rate_excluding_ties", r.win_rate_excluding_ties
                                          ? nlohmann::json(*r.win_rate_excluding_ties)
                                          : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const std::vector<ModelScores>& rows) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : rows) {
    models.push_back({{"model_tag", m.model_tag},
                      {"count", m.count},
                      {"fluency", m.fluency},
                      {"accuracy", m.accuracy},
                      {"timeliness", m.timeliness},
                      {"total", m.total}});
  }
  return {{"models", models}};
}

}  // namespace avllm::eval
