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

// avllm command-line tool: ingest, query, serve, dpo-train, eval-pairwise,
// eval-scores. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "avllm/avllm.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string env_help() {
  std::ostringstream os;
  os << "Environment (flags take precedence over environment, environment over defaults):\n";
  for (const auto& v : avllm::kEnvVars) {
    os << "  " << std::left << std::setw(24) << v.name << v.help << '\n';
  }
  return os.str();
}

// Embedder flags shared by ingest, query and serve.
struct EmbedderFlags {
  avllm::EmbedderSettings settings = avllm::EmbedderSettings::from_env();

  void add_to(CLI::App* cmd) {
    cmd->add_option("--embedder", settings.mode, "Embedder mode")
        ->check(CLI::IsMember({"hash", "remote"}))
        ->capture_default_str();
    cmd->add_option("--embed-url", settings.url, "Remote embeddings endpoint");
    cmd->add_option("--embed-model", settings.model, "Remote embedding model");
    cmd->add_option("--embed-dim", settings.dimension, "Embedding dimension")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
};

struct GeneratorFlags {
  avllm::GeneratorSettings settings = avllm::GeneratorSettings::from_env();

  void add_to(CLI::App* cmd) {
    cmd->add_option("--gen", settings.mode, "Generator mode")
        ->check(CLI::IsMember({"stub", "remote"}))
        ->capture_default_str();
    cmd->add_option("--gen-url", settings.url, "Remote chat-completions endpoint");
    cmd->add_option("--gen-model", settings.model, "Remote generation model");
  }
};

std::string default_index_path() {
  return avllm::getenv_nonempty("AVLLM_INDEX_PATH").value_or("avllm_index.jsonl");
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw avllm::IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw avllm::IoError("write to '" + path + "' failed");
}

std::optional<std::string> read_file(const std::string& path, std::string& error) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    error = "cannot read '" + path + "': no such file";
    return std::nullopt;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    error = "cannot read '" + path + "'";
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> paths;
  std::string index = default_index_path();
  std::size_t chunk_size = avllm::kDefaultChunkSize;
  std::size_t overlap = avllm::kDefaultChunkOverlap;
  EmbedderFlags embedder;
};

int run_ingest(IngestArgs& args) {
  if (args.overlap >= args.chunk_size) throw UsageError("--overlap must be smaller than --chunk-size");
  const auto retry = avllm::retry_policy_from_env();
  const auto embedder = avllm::make_embedder(args.embedder.settings, retry);

  avllm::VectorIndex index = std::filesystem::exists(args.index) ? avllm::load_index(args.index)
                                                                  : avllm::VectorIndex(embedder->dimension());
  bool failed = false;
  for (const auto& path : args.paths) {
    std::string error;
    auto text = read_file(path, error);
    if (!text) {
      std::cerr << "error: " << error << '\n';
      failed = true;
      continue;
    }
    try {
      const auto s = avllm::upsert(index, path, *text, *embedder, args.chunk_size, args.overlap);
      std::cout << path << ": " << s.chunks_added << " chunks added, " << s.chunks_skipped << " skipped\n";
    } catch (const avllm::Error& e) {
      std::cerr << "error: " << path << ": " << e.what() << '\n';
      failed = true;
    }
  }
  avllm::persist(index, args.index);
  std::cout << "index " << args.index << ": " << index.size() << " records\n";
  return failed ? kExitRuntime : 0;
}

// ---------------------------------------------------------------------------

struct QueryArgs {
  std::string question;
  std::string index = default_index_path();
  std::size_t k = avllm::kDefaultTopK;
  std::optional<double> min_score;
  bool json_output = false;
  EmbedderFlags embedder;
  GeneratorFlags generator;
};

int run_query(QueryArgs& args) {
  if (args.question.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw UsageError("question must not be empty");
  }
  if (!std::filesystem::exists(args.index)) {
    throw avllm::IoError("index '" + args.index + "' not found; run 'avllm ingest' first");
  }
  const auto retry = avllm::retry_policy_from_env();
  const auto index = avllm::load_index(args.index);
  const auto embedder = avllm::make_embedder(args.embedder.settings, retry);
  const auto generator = avllm::make_generator(args.generator.settings, retry);

  const auto answer =
      avllm::answer_question(args.question, {args.k, args.min_score}, index, *embedder, *generator);
  if (args.json_output) {
    std::cout << avllm::to_json(answer).dump(2) << '\n';
    return 0;
  }
  std::cout << answer.text << "\n\n";
  if (answer.citations.empty()) {
    std::cout << "Citations: none (ungrounded answer)\n";
    return 0;
  }
  std::cout << "Citations:\n";
  for (std::size_t i = 0; i < answer.citations.size(); ++i) {
    const auto& c = answer.citations[i];
    std::cout << "  [" << i + 1 << "] " << c.doc_id << " (chunk " << c.chunk_id << ", score " << std::fixed
              << std::setprecision(4) << c.score << ")\n      " << c.snippet << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

volatile std::sig_atomic_t g_stop_requested = 0;

extern "C" void handle_stop_signal(int) { g_stop_requested = 1; }

struct ServeArgs {
  std::string addr = avllm::getenv_nonempty("AVLLM_ADDR").value_or("127.0.0.1:8080");
  std::string index = default_index_path();
  EmbedderFlags embedder;
  GeneratorFlags generator;
};

int run_serve(ServeArgs& args) {
  auto config = avllm::ServiceConfig::from_env();
  config.bind = avllm::parse_bind_address(args.addr);
  config.index_path = args.index;
  config.embedder = args.embedder.settings;
  config.generator = args.generator.settings;

  std::shared_ptr<const avllm::Embedder> embedder = avllm::make_embedder(config.embedder, config.retry);
  std::shared_ptr<const avllm::Generator> generator = avllm::make_generator(config.generator, config.retry);
  avllm::QaService service(config, embedder, generator);
  avllm::ServiceHost host(service);
  const int port = host.bind(config.bind.host, config.bind.port);
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  host.start();
  std::cerr << "listening on " << config.bind.host << ':' << port << '\n';
  service.initialize();
  std::cerr << "index " << config.index_path << " loaded: " << service.snapshot()->size() << " records\n";
  while (g_stop_requested == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cerr << "shutting down\n";
  host.stop();
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string objective = "dpo";
  avllm::dpo::DpoConfig config;
  double reference_noise = 0.0;
  std::string report;
};

int run_train(TrainArgs& args) {
  namespace dpo = avllm::dpo;
  const auto objective = args.objective == "dpo" ? dpo::Objective::kDpo : dpo::Objective::kSft;
  const auto dataset = dpo::load_preference_dataset(args.dataset);
  if (dataset.empty()) throw avllm::EmptyDataset("dataset '" + args.dataset + "' has no pairs");
  auto reference = dpo::CategoricalPolicy::uniform(dataset);
  if (args.reference_noise > 0.0) {
    reference = dpo::perturbed(reference, args.reference_noise, args.config.seed);
  }

  const auto [policy, report] = dpo::train(dataset, reference, args.config, objective);
  const double final_loss = objective == dpo::Objective::kDpo
                                ? dpo::dpo_loss(dataset, policy, reference, args.config.beta)
                                : dpo::sft_loss(dataset, policy);

  std::cout << std::fixed << std::setprecision(6);
  std::cout << "objective: " << args.objective << '\n'
            << "pairs: " << dataset.size() << ", prompts: " << dataset.prompts().size() << '\n'
            << "initial loss: " << report.loss_trace.front().loss << '\n'
            << "final loss: " << final_loss << '\n'
            << "steps taken: " << report.steps_taken << " (" << dpo::stop_reason_name(report.stopped_reason)
            << ")\n"
            << "final mean preference probability: " << report.final_mean_preference_probability << '\n';

  if (!args.report.empty()) {
    json trace = json::array();
    for (const auto& p : report.loss_trace) trace.push_back({{"step", p.step}, {"loss", p.loss}});
    json j = {{"objective", args.objective},
              {"config",
               {{"beta", args.config.beta},
                {"learning_rate", args.config.learning_rate},
                {"max_steps", args.config.max_steps},
                {"seed", args.config.seed},
                {"convergence_tol", args.config.convergence_tol},
                {"reference_noise", args.reference_noise}}},
              {"pairs", dataset.size()},
              {"loss_trace", trace},
              {"final_loss", final_loss},
              {"final_mean_preference_probability", report.final_mean_preference_probability},
              {"steps_taken", report.steps_taken},
              {"stopped_reason", dpo::stop_reason_name(report.stopped_reason)}};
    write_json_file(args.report, j);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string input;
  std::size_t sample = 0;  // 0: use every record
  std::uint64_t seed = 0;
  bool json_output = false;
  std::string report;
};

int run_eval_pairwise(EvalArgs& args) {
  auto judgments = avllm::eval::load_judgments(args.input);
  if (args.sample > 0) judgments = avllm::eval::sample(judgments, args.sample, args.seed);
  const auto tally = avllm::eval::pairwise_tally(judgments);
  const json j = avllm::eval::to_json(tally);
  if (args.json_output) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "pairwise judgments: " << tally.total() << "\n" << avllm::eval::format_tally(tally);
  }
  if (!args.report.empty()) write_json_file(args.report, j);
  return 0;
}

int run_eval_scores(EvalArgs& args) {
  auto records = avllm::eval::load_scores(args.input);
  if (args.sample > 0) records = avllm::eval::sample_per_model(records, args.sample, args.seed);
  const auto rows = avllm::eval::expert_score_aggregate(records);
  const json j = avllm::eval::to_json(rows);
  if (args.json_output) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << avllm::eval::format_scores(rows);
  }
  if (!args.report.empty()) write_json_file(args.report, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avllm: retrieval-augmented question answering with preference-optimization tooling"};
  app.footer(env_help());
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Chunk, embed and index text files (doc_id = path)");
  ingest_cmd->add_option("paths", ingest.paths, "UTF-8 text files")->required();
  ingest_cmd->add_option("--index", ingest.index, "Index file")->capture_default_str();
  ingest_cmd->add_option("--chunk-size", ingest.chunk_size, "Chunk size in codepoints")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ingest_cmd->add_option("--overlap", ingest.overlap, "Chunk overlap in codepoints")->capture_default_str();
  ingest.embedder.add_to(ingest_cmd);

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Answer a question from the index, with citations");
  query_cmd->add_option("question", query.question, "Question text")->required();
  query_cmd->add_option("--index", query.index, "Index file")->capture_default_str();
  query_cmd->add_option("--k", query.k, "Passages to retrieve")
      ->envname("AVLLM_TOPK")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  query_cmd->add_option("--min-score", query.min_score, "Drop passages scoring below this")
      ->envname("AVLLM_MIN_SCORE");
  query_cmd->add_flag("--json", query.json_output, "Print the /v1/query JSON object");
  query.embedder.add_to(query_cmd);
  query.generator.add_to(query_cmd);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service (/v1/ingest, /v1/query, /v1/health)");
  serve_cmd->add_option("--addr", serve.addr, "Bind address host:port")->capture_default_str();
  serve_cmd->add_option("--index", serve.index, "Index file")->capture_default_str();
  serve.embedder.add_to(serve_cmd);
  serve.generator.add_to(serve_cmd);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("dpo-train", "Train a categorical policy on a preference dataset");
  train_cmd->add_option("--dataset", train.dataset, "Preference pairs (JSONL)")->required();
  train_cmd->add_option("--objective", train.objective, "Training objective")
      ->check(CLI::IsMember({"dpo", "sft"}))
      ->capture_default_str();
  train_cmd->add_option("--beta", train.config.beta, "DPO temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--lr", train.config.learning_rate, "Learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--steps", train.config.max_steps, "Maximum full-batch steps (>= 1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--seed", train.config.seed, "Seed for --ref-noise")->capture_default_str();
  train_cmd->add_option("--tol", train.config.convergence_tol, "Stop when |loss delta| < tol")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--ref-noise", train.reference_noise,
                        "Std-dev of Gaussian noise on the (otherwise uniform) reference logits")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--report", train.report, "Write the training report JSON here");

  EvalArgs pairwise;
  auto* pairwise_cmd = app.add_subcommand("eval-pairwise", "Win/lose/tie tally with both win-rate conventions");
  pairwise_cmd->add_option("--judgments", pairwise.input, "Judgments file (JSONL)")->required();
  pairwise_cmd->add_option("--sample", pairwise.sample, "Use a seeded sample of N judgments");
  pairwise_cmd->add_option("--seed", pairwise.seed, "Sampling seed")->capture_default_str();
  pairwise_cmd->add_flag("--json", pairwise.json_output, "Print JSON instead of a table");
  pairwise_cmd->add_option("--report", pairwise.report, "Also write the JSON report here");

  EvalArgs scores;
  auto* scores_cmd = app.add_subcommand("eval-scores", "Per-model mean expert scores and totals");
  scores_cmd->add_option("--scores", scores.input, "Score records (JSONL)")->required();
  scores_cmd->add_option("--sample", scores.sample, "Use a seeded sample of N records per model");
  scores_cmd->add_option("--seed", scores.seed, "Sampling seed")->capture_default_str();
  scores_cmd->add_flag("--json", scores.json_output, "Print JSON instead of a table");
  scores_cmd->add_option("--report", scores.report, "Also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*query_cmd) return run_query(query);
    if (*serve_cmd) return run_serve(serve);
    if (*train_cmd) return run_train(train);
    if (*pairwise_cmd) return run_eval_pairwise(pairwise);
    if (*scores_cmd) return run_eval_scores(scores);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
