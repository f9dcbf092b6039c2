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

// Preference optimization over a differentiable policy: Bradley-Terry
// preference probability, implicit-reward margin, the DPO negative
// log-likelihood and its exact gradient, an SFT baseline, and a
// deterministic full-batch gradient-descent trainer.
//
// The default policy class is CategoricalPolicy, a softmax table over an
// enumerated candidate set per prompt. Any type modelling
// DifferentiablePolicy can be plugged into the loss, gradient and trainer.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avllm/error.hpp"

namespace avllm::dpo {

/// One preference judgment: for prompt x, candidate `preferred` (y_w) beats
/// candidate `dispreferred` (y_l). Responses are indices into the prompt's
/// candidate set.
struct PreferencePair {
  std::string prompt_id;
  std::string prompt_text;
  std::size_t preferred = 0;
  std::size_t dispreferred = 0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

inline PreferencePair swapped(PreferencePair pair) {
  std::swap(pair.preferred, pair.dispreferred);
  return pair;
}

struct PromptCandidates {
  std::string prompt_id;
  std::string prompt_text;
  std::vector<std::string> candidates;
};

/// Ordered preference pairs plus, per prompt, the ordered candidate set.
/// Duplicate pairs are kept and reweight the mean; a pair whose two
/// responses coincide is rejected.
class PreferenceDataset {
 public:
  /// Adds a pair by response text. Unseen responses extend the prompt's
  /// candidate set in order of first appearance (preferred before
  /// dispreferred).
  void add(std::string_view prompt_id, std::string_view prompt_text,
           std::string_view preferred_text, std::string_view dispreferred_text) {
    if (preferred_text == dispreferred_text) {
      throw InvalidArgument("preferred and dispreferred responses are identical for prompt '" +
                            std::string(prompt_id) + "'");
    }
    PromptCandidates& prompt = ensure_prompt(prompt_id, prompt_text);
    const std::size_t w = intern(prompt, preferred_text);
    const std::size_t l = intern(prompt, dispreferred_text);
    pairs_.push_back({prompt.prompt_id, prompt.prompt_text, w, l});
  }

  /// Declares a prompt with an explicit candidate set.
  void add_prompt(std::string_view prompt_id, std::string_view prompt_text,
                  std::vector<std::string> candidates) {
    if (prompt_index_.contains(std::string(prompt_id))) {
      throw InvalidArgument("duplicate prompt '" + std::string(prompt_id) + "'");
    }
    PromptCandidates& prompt = ensure_prompt(prompt_id, prompt_text);
    prompt.candidates = std::move(candidates);
  }

  /// Adds a pair by candidate index against a declared prompt.
  void add_pair(std::string_view prompt_id, std::size_t preferred, std::size_t dispreferred) {
    const PromptCandidates* prompt = find_prompt(prompt_id);
    if (prompt == nullptr) throw UnknownPrompt("unknown prompt '" + std::string(prompt_id) + "'");
    if (preferred >= prompt->candidates.size() || dispreferred >= prompt->candidates.size()) {
      throw UnknownResponse("response index out of range for prompt '" +
                            std::string(prompt_id) + "'");
    }
    if (preferred == dispreferred) {
      throw InvalidArgument("preferred == dispreferred for prompt '" + std::string(prompt_id) + "'");
    }
    pairs_.push_back({prompt->prompt_id, prompt->prompt_text, preferred, dispreferred});
  }

  const std::vector<PreferencePair>& pairs() const noexcept { return pairs_; }
  const std::vector<PromptCandidates>& prompts() const noexcept { return prompts_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }

  const PromptCandidates* find_prompt(std::string_view prompt_id) const {
    auto it = prompt_index_.find(std::string(prompt_id));
    return it == prompt_index_.end() ? nullptr : &prompts_[it->second];
  }

 private:
  PromptCandidates& ensure_prompt(std::string_view prompt_id, std::string_view prompt_text) {
    auto [it, inserted] = prompt_index_.try_emplace(std::string(prompt_id), prompts_.size());
    if (inserted) prompts_.push_back({std::string(prompt_id), std::string(prompt_text), {}});
    return prompts_[it->second];
  }

  static std::size_t intern(PromptCandidates& prompt, std::string_view text) {
    auto it = std::find(prompt.candidates.begin(), prompt.candidates.end(), text);
    if (it != prompt.candidates.end()) {
      return static_cast<std::size_t>(it - prompt.candidates.begin());
    }
    prompt.candidates.emplace_back(text);
    return prompt.candidates.size() - 1;
  }

  std::vector<PromptCandidates> prompts_;
  std::unordered_map<std::string, std::size_t> prompt_index_;
  std::vector<PreferencePair> pairs_;
};

// Logits keyed by prompt id, one entry per candidate response.
using ParameterTable = std::map<std::string, std::vector<double>, std::less<>>;

inline double logsumexp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

/// Softmax policy over enumerated candidates:
/// log pi(y|x) = logit[x][y] - logsumexp(logit[x]).
class CategoricalPolicy {
 public:
  using Gradient = ParameterTable;

  CategoricalPolicy() = default;

  explicit CategoricalPolicy(ParameterTable logits) : logits_(std::move(logits)) {
    for (const auto& [id, row] : logits_) {
      if (row.empty()) throw InvalidArgument("prompt '" + id + "' has no candidates");
      for (double v : row) {
        if (!std::isfinite(v)) throw InvalidArgument("non-finite logit for prompt '" + id + "'");
      }
    }
  }

  /// All-zero logits sized to each prompt's candidate set.
  static CategoricalPolicy uniform(const PreferenceDataset& dataset) {
    ParameterTable table;
    for (const auto& prompt : dataset.prompts()) {
      table.emplace(prompt.prompt_id, std::vector<double>(prompt.candidates.size(), 0.0));
    }
    return CategoricalPolicy(std::move(table));
  }

  const ParameterTable& logits() const noexcept { return logits_; }

  const std::vector<double>& row(std::string_view prompt_id) const {
    auto it = logits_.find(prompt_id);
    if (it == logits_.end()) throw UnknownPrompt("unknown prompt '" + std::string(prompt_id) + "'");
    return it->second;
  }

  bool covers(std::string_view prompt_id, std::size_t response) const {
    auto it = logits_.find(prompt_id);
    return it != logits_.end() && response < it->second.size();
  }

  double log_prob(std::string_view prompt_id, std::size_t response) const {
    const auto& logits = row(prompt_id);
    check_response(prompt_id, logits, response);
    return logits[response] - logsumexp(logits);
  }

  std::vector<double> probabilities(std::string_view prompt_id) const {
    const auto& logits = row(prompt_id);
    const double lse = logsumexp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
    return p;
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (const auto& [id, row] : logits_) g.emplace(id, std::vector<double>(row.size(), 0.0));
    return g;
  }

  /// g += weight * d/dtheta log pi(response | prompt), i.e.
  /// weight * (onehot(response) - softmax(logits)) on that prompt's row.
  void add_log_prob_gradient(std::string_view prompt_id, std::size_t response, double weight,
                             Gradient& g) const {
    const auto& logits = row(prompt_id);
    check_response(prompt_id, logits, response);
    auto& grow = g.find(prompt_id)->second;
    const double lse = logsumexp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grow[i] -= weight * std::exp(logits[i] - lse);
    }
    grow[response] += weight;
  }

  /// theta <- theta - step * g
  void apply_update(const Gradient& g, double step) {
    for (auto& [id, row] : logits_) {
      const auto& grow = g.find(id)->second;
      for (std::size_t i = 0; i < row.size(); ++i) row[i] -= step * grow[i];
    }
  }

  friend bool operator==(const CategoricalPolicy&, const CategoricalPolicy&) = default;

 private:
  static void check_response(std::string_view prompt_id, const std::vector<double>& logits,
                             std::size_t response) {
    if (response >= logits.size()) {
      throw UnknownResponse("response " + std::to_string(response) + " not in candidate set of '" +
                            std::string(prompt_id) + "'");
    }
  }

  ParameterTable logits_;
};

/// Copy of `policy` with every logit perturbed by N(0, sigma^2) noise.
/// Normals come from Box-Muller over raw mt19937_64 output so the result is
/// the same with every standard library.
inline CategoricalPolicy perturbed(const CategoricalPolicy& policy, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be finite and >= 0");
  std::mt19937_64 rng(seed);
  auto unit = [&rng] {  // (0, 1]
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  };
  ParameterTable table = policy.logits();
  for (auto& [id, row] : table) {
    for (double& v : row) {
      const double r = std::sqrt(-2.0 * std::log(unit()));
      v += sigma * r * std::cos(2.0 * 3.14159265358979323846 * unit());
    }
  }
  return CategoricalPolicy(std::move(table));
}

template <typename P>
concept DifferentiablePolicy =
    std::copyable<P> &&
    requires(const P& cp, P& p, std::string_view id, std::size_t r, double w,
             typename P::Gradient& g, const typename P::Gradient& cg) {
      { cp.log_prob(id, r) } -> std::convertible_to<double>;
      { cp.zero_gradient() } -> std::same_as<typename P::Gradient>;
      cp.add_log_prob_gradient(id, r, w, g);
      p.apply_update(cg, w);
    };

// ---------------------------------------------------------------------------
// Scalar pieces.

/// Logistic sigmoid, two-branch so neither branch overflows.
inline double preference_probability(double margin) {
  if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

/// -log sigmoid(u).
inline double neg_log_sigmoid(double u) {
  if (u >= 0.0) return std::log1p(std::exp(-u));
  return -u + std::log1p(std::exp(u));
}

inline void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("beta must be a positive finite real");
  }
}

/// log pi(y|x) - log pi_ref(y|x).
template <DifferentiablePolicy P>
double log_ratio(const P& policy, const P& reference, std::string_view prompt_id,
                 std::size_t response) {
  return policy.log_prob(prompt_id, response) - reference.log_prob(prompt_id, response);
}

/// Implicit-reward margin beta * (log-ratio(y_w) - log-ratio(y_l)). The
/// partition term of the reward cancels in the difference.
template <DifferentiablePolicy P>
double reward_margin(const PreferencePair& pair, const P& policy, const P& reference,
                     double beta) {
  check_beta(beta);
  const double w = log_ratio(policy, reference, pair.prompt_id, pair.preferred);
  const double l = log_ratio(policy, reference, pair.prompt_id, pair.dispreferred);
  return beta * (w - l);
}

// ---------------------------------------------------------------------------
// Dataset-level objectives.

namespace detail {

inline void require_non_empty(const PreferenceDataset& dataset) {
  if (dataset.empty()) throw EmptyDataset("preference dataset is empty");
}

}  // namespace detail

/// Mean over pairs of -log sigmoid(margin).
template <DifferentiablePolicy P>
double dpo_loss(const PreferenceDataset& dataset, const P& policy, const P& reference,
                double beta) {
  detail::require_non_empty(dataset);
  double total = 0.0;
  for (const auto& pair : dataset.pairs()) {
    total += neg_log_sigmoid(reward_margin(pair, policy, reference, beta));
  }
  return total / static_cast<double>(dataset.size());
}

/// Exact gradient of dpo_loss. Per pair: dL/du = -sigmoid(-u), and
/// du/dtheta = beta * (grad log pi(y_w|x) - grad log pi(y_l|x)).
template <DifferentiablePolicy P>
typename P::Gradient dpo_gradient(const PreferenceDataset& dataset, const P& policy,
                                  const P& reference, double beta) {
  detail::require_non_empty(dataset);
  auto grad = policy.zero_gradient();
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  for (const auto& pair : dataset.pairs()) {
    const double u = reward_margin(pair, policy, reference, beta);
    const double coeff = -preference_probability(-u) * beta * inv_n;
    policy.add_log_prob_gradient(pair.prompt_id, pair.preferred, coeff, grad);
    policy.add_log_prob_gradient(pair.prompt_id, pair.dispreferred, -coeff, grad);
  }
  return grad;
}

/// SFT baseline: mean over pairs of -log pi(y_w|x).
template <DifferentiablePolicy P>
double sft_loss(const PreferenceDataset& dataset, const P& policy) {
  detail::require_non_empty(dataset);
  double total = 0.0;
  for (const auto& pair : dataset.pairs()) total -= policy.log_prob(pair.prompt_id, pair.preferred);
  return total / static_cast<double>(dataset.size());
}

template <DifferentiablePolicy P>
typename P::Gradient sft_gradient(const PreferenceDataset& dataset, const P& policy) {
  detail::require_non_empty(dataset);
  auto grad = policy.zero_gradient();
  const double weight = -1.0 / static_cast<double>(dataset.size());
  for (const auto& pair : dataset.pairs()) {
    policy.add_log_prob_gradient(pair.prompt_id, pair.preferred, weight, grad);
  }
  return grad;
}

template <DifferentiablePolicy P>
double mean_preference_probability(const PreferenceDataset& dataset, const P& policy,
                                   const P& reference, double beta) {
  detail::require_non_empty(dataset);
  double total = 0.0;
  for (const auto& pair : dataset.pairs()) {
    total += preference_probability(reward_margin(pair, policy, reference, beta));
  }
  return total / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// Trainer.

enum class Objective { kDpo, kSft };

inline std::string_view objective_name(Objective o) { return o == Objective::kDpo ? "dpo" : "sft"; }

struct DpoConfig {
  double beta = 1.0;
  double learning_rate = 0.1;
  std::int64_t max_steps = 500;
  std::uint64_t seed = 0;
  double convergence_tol = 1e-9;

  void validate() const {
    check_beta(beta);
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning_rate must be a finite non-negative real");
    }
    if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    if (!(convergence_tol >= 0.0)) throw InvalidArgument("convergence_tol must be >= 0");
  }
};

enum class StopReason { kMaxSteps, kConverged };

inline std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::kMaxSteps ? "max_steps" : "converged";
}

struct LossPoint {
  std::int64_t step;
  double loss;
};

struct TrainReport {
  Objective objective = Objective::kDpo;
  std::vector<LossPoint> loss_trace;  // loss at the start of each step
  double final_mean_preference_probability = 0.5;
  std::int64_t steps_taken = 0;       // gradient updates applied
  StopReason stopped_reason = StopReason::kMaxSteps;
};

template <DifferentiablePolicy P>
struct TrainResult {
  P policy;
  TrainReport report;
};

namespace detail {

template <DifferentiablePolicy P>
void require_coverage(const PreferenceDataset& dataset, const P& reference) {
  for (const auto& pair : dataset.pairs()) {
    (void)reference.log_prob(pair.prompt_id, pair.preferred);
    (void)reference.log_prob(pair.prompt_id, pair.dispreferred);
  }
}

}  // namespace detail

/// Full-batch gradient descent from policy = reference. Each step records
/// the current loss, stops early once |loss - previous| < convergence_tol,
/// and otherwise applies theta <- theta - lr * grad. A non-finite loss
/// raises NonFiniteLoss (usually a divergent learning rate).
template <DifferentiablePolicy P>
TrainResult<P> train(const PreferenceDataset& dataset, const P& reference,
                     const DpoConfig& config, Objective objective) {
  config.validate();
  detail::require_non_empty(dataset);
  detail::require_coverage(dataset, reference);

  TrainResult<P> result{reference, {}};
  TrainReport& report = result.report;
  report.objective = objective;
  report.loss_trace.reserve(static_cast<std::size_t>(std::min<std::int64_t>(config.max_steps, 1 << 20)));

  auto loss_of = [&](const P& policy) {
    return objective == Objective::kDpo ? dpo_loss(dataset, policy, reference, config.beta)
                                        : sft_loss(dataset, policy);
  };

  for (std::int64_t step = 0; step < config.max_steps; ++step) {
    const double loss = loss_of(result.policy);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("loss became non-finite at step " + std::to_string(step) +
                          "; learning rate too large?");
    }
    const bool converged = !report.loss_trace.empty() &&
                           std::abs(loss - report.loss_trace.back().loss) < config.convergence_tol;
    report.loss_trace.push_back({step, loss});
    if (converged) {
      report.stopped_reason = StopReason::kConverged;
      break;
    }
    const auto grad = objective == Objective::kDpo
                          ? dpo_gradient(dataset, result.policy, reference, config.beta)
                          : sft_gradient(dataset, result.policy);
    result.policy.apply_update(grad, config.learning_rate);
    ++report.steps_taken;
  }

  report.final_mean_preference_probability =
      mean_preference_probability(dataset, result.policy, reference, config.beta);
  return result;
}

}  // namespace avllm::dpo
