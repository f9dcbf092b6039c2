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

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "avllm/dpo.hpp"
#include "avllm/preference_io.hpp"
#include "test_support.hpp"

namespace avllm::dpo {
namespace {

constexpr double kLn2 = 0.69314718055994530942;

PreferenceDataset two_candidate_dataset() {
  PreferenceDataset ds;
  ds.add_prompt("x", "prompt", {"a", "b"});
  ds.add_pair("x", 0, 1);
  return ds;
}

CategoricalPolicy table(std::initializer_list<std::pair<const std::string, std::vector<double>>> rows) {
  return CategoricalPolicy(ParameterTable(rows));
}

// ---------------------------------------------------------------------------
// Randomized configurations (prompts <= 5, candidates 2..4, beta in
// [0.05, 5]).

struct RandomConfig {
  PreferenceDataset dataset;
  CategoricalPolicy policy;
  CategoricalPolicy reference;
  double beta;
};

RandomConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_prompts(1, 5), n_cands(2, 4), n_pairs(1, 8);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> beta(0.05, 5.0);
  RandomConfig cfg{{}, {}, {}, beta(rng)};
  ParameterTable theta, ref;
  const int prompts = n_prompts(rng);
  for (int p = 0; p < prompts; ++p) {
    const std::string id = "p" + std::to_string(p);
    const int c = n_cands(rng);
    std::vector<std::string> cands;
    for (int i = 0; i < c; ++i) cands.push_back(id + "_r" + std::to_string(i));
    cfg.dataset.add_prompt(id, "prompt " + id, cands);
    std::vector<double> t(c), r(c);
    for (int i = 0; i < c; ++i) {
      t[i] = 1.5 * normal(rng);
      r[i] = 1.5 * normal(rng);
    }
    theta.emplace(id, t);
    ref.emplace(id, r);
    std::uniform_int_distribution<int> pick(0, c - 1);
    const int pairs = n_pairs(rng);
    for (int k = 0; k < pairs; ++k) {
      int w = pick(rng), l = pick(rng);
      while (l == w) l = pick(rng);
      cfg.dataset.add_pair(id, static_cast<std::size_t>(w), static_cast<std::size_t>(l));
    }
  }
  cfg.policy = CategoricalPolicy(theta);
  cfg.reference = CategoricalPolicy(ref);
  return cfg;
}

// Central differences of a scalar loss over every logit.
template <typename Loss>
ParameterTable finite_difference(const CategoricalPolicy& at, Loss loss, double h = 1e-5) {
  ParameterTable grad;
  for (const auto& [id, row] : at.logits()) {
    std::vector<double> g(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      ParameterTable plus = at.logits(), minus = at.logits();
      plus[id][i] += h;
      minus[id][i] -= h;
      g[i] = (loss(CategoricalPolicy(plus)) - loss(CategoricalPolicy(minus))) / (2 * h);
    }
    grad.emplace(id, g);
  }
  return grad;
}

bool gradients_agree(const ParameterTable& analytic, const ParameterTable& numeric, std::string* why) {
  for (const auto& [id, a] : analytic) {
    const auto& n = numeric.at(id);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double err = std::abs(a[i] - n[i]);
      if (err <= 1e-8) continue;
      if (err / std::max(std::abs(a[i]), std::abs(n[i])) < 1e-4) continue;
      *why = id + "[" + std::to_string(i) + "]: analytic " + std::to_string(a[i]) + " vs numeric " +
             std::to_string(n[i]);
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

TEST(RewardMargin, VanishesWhenPolicyEqualsReference) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = random_config(rng);
    for (const auto& pair : cfg.dataset.pairs()) {
      EXPECT_EQ(reward_margin(pair, cfg.reference, cfg.reference, cfg.beta), 0.0);
    }
  }
}

TEST(RewardMargin, HandArithmeticExample) {
  // Reference uniform over 3 candidates; policy chosen so that the log-ratio
  // of candidate 0 is +0.5 and of candidate 1 is -0.3:
  // log pi(i) = theta_i - lse(theta) = log(1/3) + delta_i.
  const double log_third = std::log(1.0 / 3.0);
  const double lp0 = log_third + 0.5, lp1 = log_third - 0.3;
  const double lp2 = std::log(1.0 - std::exp(lp0) - std::exp(lp1));
  auto policy = table({{"x", {lp0, lp1, lp2}}});
  auto reference = table({{"x", {0.0, 0.0, 0.0}}});
  PreferencePair pair{"x", "q", 0, 1};
  EXPECT_NEAR(reward_margin(pair, policy, reference, 2.0), 1.6, 1e-12);
}

TEST(RewardMargin, AntisymmetricAndLinearInBetaExactly) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> beta(0.05, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = random_config(rng);
    for (const auto& pair : cfg.dataset.pairs()) {
      const double u = reward_margin(pair, cfg.policy, cfg.reference, cfg.beta);
      EXPECT_EQ(reward_margin(swapped(pair), cfg.policy, cfg.reference, cfg.beta), -u);
      const double c = beta(rng);
      EXPECT_EQ(reward_margin(pair, cfg.policy, cfg.reference, c),
                c * reward_margin(pair, cfg.policy, cfg.reference, 1.0));
    }
  }
}

TEST(RewardMargin, UnknownPromptAndResponse) {
  auto policy = table({{"x", {0.0, 0.0}}});
  EXPECT_THROW(reward_margin(PreferencePair{"y", "", 0, 1}, policy, policy, 1.0), UnknownPrompt);
  EXPECT_THROW(reward_margin(PreferencePair{"x", "", 0, 2}, policy, policy, 1.0), UnknownResponse);
  EXPECT_THROW(reward_margin(PreferencePair{"x", "", 0, 1}, policy, policy, 0.0), InvalidArgument);
}

TEST(PreferenceProbability, Anchors) {
  EXPECT_EQ(preference_probability(0.0), 0.5);
  EXPECT_NEAR(preference_probability(1.0), 0.7310585786, 1e-10);
  const double tiny = preference_probability(-50.0);
  EXPECT_GT(tiny, 0.0);
  EXPECT_LT(tiny, 1e-20);
  EXPECT_TRUE(std::isfinite(std::log(tiny)));
  EXPECT_EQ(preference_probability(700.0), 1.0);
  EXPECT_GT(preference_probability(-700.0), 0.0);
}

TEST(PreferenceProbability, Complementarity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-700.0, 700.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    EXPECT_NEAR(preference_probability(x) + preference_probability(-x), 1.0, 1e-12);
  }
}

TEST(NegLogSigmoid, StableAtExtremes) {
  EXPECT_NEAR(neg_log_sigmoid(0.0), kLn2, 1e-15);
  EXPECT_NEAR(neg_log_sigmoid(-700.0), 700.0, 1e-9);
  EXPECT_GE(neg_log_sigmoid(700.0), 0.0);
  EXPECT_NEAR(neg_log_sigmoid(1.0), 0.3132616875, 1e-10);
}

TEST(DpoLoss, EqualsLn2AtReference) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto cfg = random_config(rng);
    EXPECT_NEAR(dpo_loss(cfg.dataset, cfg.reference, cfg.reference, cfg.beta), kLn2, 1e-12);
  }
}

TEST(DpoLoss, CalculatorValues) {
  // Single pair with margin 1: beta = 1 and theta_a - theta_b = 1 over a
  // uniform reference.
  auto ds = two_candidate_dataset();
  auto policy = table({{"x", {1.0, 0.0}}});
  auto reference = table({{"x", {0.0, 0.0}}});
  EXPECT_NEAR(dpo_loss(ds, policy, reference, 1.0), 0.3132616875, 1e-10);

  // Two pairs with margins {0, 1}: the second prompt has policy == reference.
  ds.add_prompt("z", "other", {"c", "d"});
  ds.add_pair("z", 0, 1);
  auto policy2 = table({{"x", {1.0, 0.0}}, {"z", {0.3, 0.3}}});
  auto reference2 = table({{"x", {0.0, 0.0}}, {"z", {0.0, 0.0}}});
  EXPECT_NEAR(dpo_loss(ds, policy2, reference2, 1.0), 0.5032044340, 1e-10);
}

TEST(DpoLoss, EmptyDatasetRejected) {
  PreferenceDataset empty;
  CategoricalPolicy p;
  EXPECT_THROW(dpo_loss(empty, p, p, 1.0), EmptyDataset);
  EXPECT_THROW(dpo_gradient(empty, p, p, 1.0), EmptyDataset);
  EXPECT_THROW(sft_loss(empty, p), EmptyDataset);
}

TEST(DpoLoss, DecreasesAsMarginsGrow) {
  auto ds = two_candidate_dataset();
  auto reference = table({{"x", {0.0, 0.0}}});
  double previous = dpo_loss(ds, reference, reference, 1.0);
  for (double gap = 0.25; gap <= 5.0; gap += 0.25) {
    const double loss = dpo_loss(ds, table({{"x", {gap, 0.0}}}), reference, 1.0);
    EXPECT_LT(loss, previous);
    EXPECT_GE(loss, 0.0);
    previous = loss;
  }
}

TEST(DpoGradient, SingleTwoCandidateExample) {
  auto ds = two_candidate_dataset();
  auto zero = table({{"x", {0.0, 0.0}}});
  const auto g = dpo_gradient(ds, zero, zero, 1.0);
  EXPECT_NEAR(g.at("x")[0], -0.5, 1e-15);
  EXPECT_NEAR(g.at("x")[1], 0.5, 1e-15);

  const auto fd = finite_difference(zero, [&](const CategoricalPolicy& p) { return dpo_loss(ds, p, zero, 1.0); });
  EXPECT_NEAR(fd.at("x")[0], -0.5, 1e-9);
  EXPECT_NEAR(fd.at("x")[1], 0.5, 1e-9);
}

TEST(DpoGradient, SymmetricDatasetHasZeroGradient) {
  PreferenceDataset ds;
  ds.add_prompt("x", "q", {"a", "b", "c"});
  ds.add_pair("x", 0, 1);
  ds.add_pair("x", 1, 0);
  auto ref = table({{"x", {0.2, -0.4, 1.0}}});
  const auto g = dpo_gradient(ds, ref, ref, 0.7);
  for (double v : g.at("x")) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(DpoGradient, MatchesFiniteDifferencesOnRandomConfigs) {
  std::mt19937_64 rng(20260101);
  for (int trial = 0; trial < 120; ++trial) {
    auto cfg = random_config(rng);
    const auto analytic = dpo_gradient(cfg.dataset, cfg.policy, cfg.reference, cfg.beta);
    const auto numeric = finite_difference(cfg.policy, [&](const CategoricalPolicy& p) {
      return dpo_loss(cfg.dataset, p, cfg.reference, cfg.beta);
    });
    std::string why;
    EXPECT_TRUE(gradients_agree(analytic, numeric, &why)) << "trial " << trial << ": " << why;
  }
}

TEST(DpoGradient, NegativeGradientIsADescentDirection) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = random_config(rng);
    const double before = dpo_loss(cfg.dataset, cfg.policy, cfg.reference, cfg.beta);
    const auto g = dpo_gradient(cfg.dataset, cfg.policy, cfg.reference, cfg.beta);
    double norm = 0.0;
    for (const auto& [id, row] : g)
      for (double v : row) norm += v * v;
    if (norm < 1e-20) continue;
    auto stepped = cfg.policy;
    stepped.apply_update(g, 1e-3);
    EXPECT_LT(dpo_loss(cfg.dataset, stepped, cfg.reference, cfg.beta), before) << "trial " << trial;
  }
}

TEST(SoftmaxShift, ChangesNothingObservable) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto cfg = random_config(rng);
    ParameterTable shifted = cfg.policy.logits();
    const std::string target = shifted.begin()->first;
    const double c = shift(rng);
    for (double& v : shifted[target]) v += c;
    const CategoricalPolicy moved(shifted);
    for (std::size_t r = 0; r < moved.row(target).size(); ++r) {
      EXPECT_NEAR(moved.log_prob(target, r), cfg.policy.log_prob(target, r), 1e-12);
    }
    for (const auto& pair : cfg.dataset.pairs()) {
      const double a = reward_margin(pair, cfg.policy, cfg.reference, cfg.beta);
      const double b = reward_margin(pair, moved, cfg.reference, cfg.beta);
      EXPECT_NEAR(a, b, 1e-10);
      EXPECT_NEAR(preference_probability(a), preference_probability(b), 1e-12);
    }
    EXPECT_NEAR(dpo_loss(cfg.dataset, cfg.policy, cfg.reference, cfg.beta),
                dpo_loss(cfg.dataset, moved, cfg.reference, cfg.beta), 1e-10);
  }
}

TEST(CategoricalPolicy, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    auto cfg = random_config(rng);
    for (const auto& [id, row] : cfg.policy.logits()) {
      double total = 0.0;
      for (double p : cfg.policy.probabilities(id)) total += p;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(CategoricalPolicy, RejectsNonFiniteLogits) {
  EXPECT_THROW(table({{"x", {0.0, std::numeric_limits<double>::infinity()}}}), InvalidArgument);
  EXPECT_THROW(table({{"x", {}}}), InvalidArgument);
}

TEST(SftLoss, UniformAndCalculatorValues) {
  auto ds = two_candidate_dataset();
  EXPECT_NEAR(sft_loss(ds, CategoricalPolicy::uniform(ds)), kLn2, 1e-15);

  PreferenceDataset four;
  four.add_prompt("x", "q", {"a", "b", "c", "d"});
  four.add_pair("x", 2, 0);
  EXPECT_NEAR(sft_loss(four, CategoricalPolicy::uniform(four)), 1.3862943611, 1e-10);

  // Probability 0.9 on y_w: logit log(0.9) against log(0.1).
  auto p = table({{"x", {std::log(0.9), std::log(0.1)}}});
  EXPECT_NEAR(sft_loss(ds, p), 0.1053605157, 1e-10);
}

TEST(SftGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto cfg = random_config(rng);
    const auto analytic = sft_gradient(cfg.dataset, cfg.policy);
    const auto numeric =
        finite_difference(cfg.policy, [&](const CategoricalPolicy& p) { return sft_loss(cfg.dataset, p); });
    std::string why;
    EXPECT_TRUE(gradients_agree(analytic, numeric, &why)) << why;
  }
}

// ---------------------------------------------------------------------------
// Dataset construction.

TEST(PreferenceDataset, CandidatesInOrderOfFirstAppearance) {
  PreferenceDataset ds;
  ds.add("q1", "Q1", "good", "bad");
  ds.add("q1", "Q1", "ok", "bad");
  ds.add("q2", "Q2", "x", "y");
  ds.add("q1", "Q1", "good", "bad");  // duplicates are kept
  ASSERT_EQ(ds.prompts().size(), 2u);
  EXPECT_EQ(ds.prompts()[0].candidates, (std::vector<std::string>{"good", "bad", "ok"}));
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.pairs()[1].preferred, 2u);
  EXPECT_EQ(ds.pairs()[1].dispreferred, 1u);
  EXPECT_THROW(ds.add("q1", "Q1", "same", "same"), InvalidArgument);
}

TEST(PreferenceIo, ParsesAndReportsLineNumbers) {
  std::istringstream good(
      R"({"prompt_id":"a","prompt_text":"A?","preferred_text":"yes","dispreferred_text":"no"})"
      "\n\n"
      R"({"prompt_id":"a","prompt_text":"A?","preferred_text":"maybe","dispreferred_text":"no"})"
      "\n");
  const auto ds = read_preference_dataset(good);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.prompts()[0].candidates.size(), 3u);

  std::istringstream missing(
      R"({"prompt_id":"a","prompt_text":"A?","preferred_text":"yes","dispreferred_text":"no"})"
      "\n"
      R"({"prompt_id":"a","prompt_text":"A?","preferred_text":"yes"})"
      "\n");
  try {
    read_preference_dataset(missing);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("dispreferred_text"), std::string::npos);
  }

  std::istringstream same(R"({"prompt_id":"a","prompt_text":"A?","preferred_text":"x","dispreferred_text":"x"})");
  EXPECT_THROW(read_preference_dataset(same), FormatError);
  std::istringstream garbage("{not json\n");
  EXPECT_THROW(read_preference_dataset(garbage), FormatError);
}

TEST(PreferenceIo, ShippedDatasetShape) {
  const auto ds = load_preference_dataset((testing::data_dir() / "preferences.jsonl").string());
  EXPECT_EQ(ds.size(), 50u);
  for (const auto& p : ds.prompts()) EXPECT_GE(p.candidates.size(), 2u);
}

// ---------------------------------------------------------------------------
// Trainer.

TEST(Train, RejectsZeroSteps) {
  auto ds = two_candidate_dataset();
  DpoConfig cfg;
  cfg.max_steps = 0;
  EXPECT_THROW(train(ds, CategoricalPolicy::uniform(ds), cfg, Objective::kDpo), InvalidArgument);
}

TEST(Train, ZeroLearningRateSingleStepIsANoOp) {
  auto ds = two_candidate_dataset();
  const auto ref = CategoricalPolicy::uniform(ds);
  DpoConfig cfg;
  cfg.max_steps = 1;
  cfg.learning_rate = 0.0;
  const auto [policy, report] = train(ds, ref, cfg, Objective::kDpo);
  EXPECT_EQ(policy, ref);
  ASSERT_EQ(report.loss_trace.size(), 1u);
  EXPECT_EQ(report.loss_trace[0].step, 0);
  EXPECT_NEAR(report.loss_trace[0].loss, kLn2, 1e-15);
  EXPECT_EQ(report.stopped_reason, StopReason::kMaxSteps);
}

TEST(Train, ShippedDatasetDecreasesStrictly) {
  const auto ds = load_preference_dataset((testing::data_dir() / "preferences.jsonl").string());
  const auto [policy, report] = train(ds, CategoricalPolicy::uniform(ds), DpoConfig{}, Objective::kDpo);
  ASSERT_EQ(report.loss_trace.size(), 500u);
  EXPECT_EQ(report.stopped_reason, StopReason::kMaxSteps);
  for (std::size_t i = 1; i < report.loss_trace.size(); ++i) {
    EXPECT_EQ(report.loss_trace[i].step, report.loss_trace[i - 1].step + 1);
    ASSERT_LT(report.loss_trace[i].loss, report.loss_trace[i - 1].loss) << "step " << i;
    ASSERT_GE(report.loss_trace[i].loss, 0.0);
  }
  EXPECT_GT(report.final_mean_preference_probability, 0.75);
}

TEST(Train, IsDeterministic) {
  const auto ds = load_preference_dataset((testing::data_dir() / "preferences.jsonl").string());
  const auto ref = perturbed(CategoricalPolicy::uniform(ds), 0.3, 42);
  DpoConfig cfg;
  cfg.max_steps = 100;
  const auto a = train(ds, ref, cfg, Objective::kDpo);
  const auto b = train(ds, ref, cfg, Objective::kDpo);
  EXPECT_EQ(a.policy, b.policy);
  ASSERT_EQ(a.report.loss_trace.size(), b.report.loss_trace.size());
  for (std::size_t i = 0; i < a.report.loss_trace.size(); ++i) {
    EXPECT_EQ(a.report.loss_trace[i].loss, b.report.loss_trace[i].loss);
  }
}

TEST(Train, ContradictoryPairsPlateauAtLn2) {
  PreferenceDataset ds;
  ds.add("x", "q", "a", "b");
  ds.add("x", "q", "b", "a");
  const auto ref = CategoricalPolicy::uniform(ds);
  const auto [policy, report] = train(ds, ref, DpoConfig{}, Objective::kDpo);
  EXPECT_EQ(report.stopped_reason, StopReason::kConverged);
  for (const auto& point : report.loss_trace) EXPECT_NEAR(point.loss, kLn2, 1e-12);
  const auto& row = policy.row("x");
  EXPECT_NEAR(row[0], 0.0, 1e-12);
  EXPECT_NEAR(row[1], 0.0, 1e-12);
}

TEST(Train, SftRaisesPreferredLikelihood) {
  const auto ds = load_preference_dataset((testing::data_dir() / "preferences.jsonl").string());
  const auto ref = CategoricalPolicy::uniform(ds);
  DpoConfig cfg;
  cfg.max_steps = 200;
  const auto [policy, report] = train(ds, ref, cfg, Objective::kSft);
  EXPECT_NEAR(report.loss_trace.front().loss, sft_loss(ds, ref), 1e-15);
  EXPECT_LT(sft_loss(ds, policy), report.loss_trace.front().loss);
}

TEST(Train, UncoveredReferenceRejected) {
  auto ds = two_candidate_dataset();
  EXPECT_THROW(train(ds, table({{"other", {0.0, 0.0}}}), DpoConfig{}, Objective::kDpo), UnknownPrompt);
}

TEST(Perturbed, DeterministicPerSeed) {
  const auto ds = load_preference_dataset((testing::data_dir() / "preferences.jsonl").string());
  const auto base = CategoricalPolicy::uniform(ds);
  EXPECT_EQ(perturbed(base, 0.5, 1), perturbed(base, 0.5, 1));
  EXPECT_NE(perturbed(base, 0.5, 1), perturbed(base, 0.5, 2));
  EXPECT_EQ(perturbed(base, 0.0, 9), base);
}

// ---------------------------------------------------------------------------
// Pluggable policies.

// Log-linear policy sharing one weight vector across prompts:
// logit(x, y) = features[x][y] . w.
class LogLinearPolicy {
 public:
  using Gradient = std::vector<double>;

  LogLinearPolicy(std::map<std::string, std::vector<std::vector<double>>, std::less<>> features,
                  std::vector<double> w)
      : features_(std::move(features)), w_(std::move(w)) {}

  double log_prob(std::string_view id, std::size_t y) const {
    const auto logits = logits_for(id);
    return logits.at(y) - logsumexp(logits);
  }
  Gradient zero_gradient() const { return Gradient(w_.size(), 0.0); }
  void add_log_prob_gradient(std::string_view id, std::size_t y, double weight, Gradient& g) const {
    const auto& f = features_.find(id)->second;
    const auto logits = logits_for(id);
    const double lse = logsumexp(logits);
    for (std::size_t j = 0; j < w_.size(); ++j) {
      double expected = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) expected += std::exp(logits[c] - lse) * f[c][j];
      g[j] += weight * (f[y][j] - expected);
    }
  }
  void apply_update(const Gradient& g, double step) {
    for (std::size_t j = 0; j < w_.size(); ++j) w_[j] -= step * g[j];
  }
  std::vector<double>& weights() { return w_; }

 private:
  std::vector<double> logits_for(std::string_view id) const {
    auto it = features_.find(id);
    if (it == features_.end()) throw UnknownPrompt(std::string(id));
    std::vector<double> out;
    for (const auto& f : it->second) {
      double s = 0.0;
      for (std::size_t j = 0; j < w_.size(); ++j) s += f[j] * w_[j];
      out.push_back(s);
    }
    return out;
  }

  std::map<std::string, std::vector<std::vector<double>>, std::less<>> features_;
  std::vector<double> w_;
};

static_assert(DifferentiablePolicy<CategoricalPolicy>);
static_assert(DifferentiablePolicy<LogLinearPolicy>);

TEST(PluggablePolicy, LogLinearGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = random_config(rng);
    const std::size_t dims = 3;
    std::map<std::string, std::vector<std::vector<double>>, std::less<>> features;
    for (const auto& p : cfg.dataset.prompts()) {
      auto& rows = features[p.prompt_id];
      for (std::size_t c = 0; c < p.candidates.size(); ++c) {
        rows.push_back({normal(rng), normal(rng), normal(rng)});
      }
    }
    LogLinearPolicy policy(features, {normal(rng), normal(rng), normal(rng)});
    const LogLinearPolicy reference(features, {normal(rng), normal(rng), normal(rng)});
    const auto analytic = dpo_gradient(cfg.dataset, policy, reference, cfg.beta);
    for (std::size_t j = 0; j < dims; ++j) {
      const double h = 1e-5;
      LogLinearPolicy plus = policy, minus = policy;
      plus.weights()[j] += h;
      minus.weights()[j] -= h;
      const double numeric = (dpo_loss(cfg.dataset, plus, reference, cfg.beta) -
                              dpo_loss(cfg.dataset, minus, reference, cfg.beta)) /
                             (2 * h);
      const double err = std::abs(analytic[j] - numeric);
      EXPECT_TRUE(err <= 1e-8 || err / std::max(std::abs(analytic[j]), std::abs(numeric)) < 1e-4)
          << analytic[j] << " vs " << numeric;
    }
  }
}

// Policy whose log-probabilities turn NaN once it has been updated.
class UnstablePolicy {
 public:
  using Gradient = std::vector<double>;
  double log_prob(std::string_view, std::size_t y) const {
    if (updated_) return std::numeric_limits<double>::quiet_NaN();
    return y == 0 ? std::log(0.5) : std::log(0.5);
  }
  Gradient zero_gradient() const { return {0.0}; }
  void add_log_prob_gradient(std::string_view, std::size_t, double w, Gradient& g) const { g[0] += w; }
  void apply_update(const Gradient&, double) { updated_ = true; }

 private:
  bool updated_ = false;
};

TEST(Train, NonFiniteLossIsReported) {
  auto ds = two_candidate_dataset();
  DpoConfig cfg;
  cfg.max_steps = 5;
  EXPECT_THROW(train(ds, UnstablePolicy{}, cfg, Objective::kDpo), NonFiniteLoss);
}

}  // namespace
}  // namespace avllm::dpo
