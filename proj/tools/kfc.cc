// Copyright 2026 The kfconformer Authors
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

// kfc: train, evaluate, analyze and benchmark key-frame Conformer models.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "kfc/commands.h"
#include "kfc/train.h"

int main(int argc, char** argv) {
  CLI::App app{"Key-frame guided Conformer CTC toolkit"};
  app.require_subcommand(1);

  kfc::TrainArgs train;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config_path, "Run config JSON")
      ->required();
  train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
  auto* seed_opt =
      train_cmd->add_option("--seed", seed, "Override the model seed");

  kfc::EvalArgs eval;
  std::string eval_mode, eval_kfsa;
  std::size_t eval_w = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy-decode evaluation");
  eval_cmd->add_option("--ckpt", eval.ckpt_dir, "Checkpoint directory")
      ->required();
  eval_cmd->add_option("--data", eval.data_path, "Dataset file")->required();
  auto* eval_mode_opt =
      eval_cmd->add_option("--mode", eval_mode, "dense, kfsa or kfds");
  auto* eval_w_opt = eval_cmd->add_option("--w", eval_w, "Local context width");
  auto* eval_kfsa_opt = eval_cmd->add_option(
      "--kfsa-mode", eval_kfsa, "window_plus_k, k_only or window_only");

  kfc::AnalyzeArgs analyze;
  std::size_t analyze_w = 0;
  auto* analyze_cmd =
      app.add_subcommand("analyze", "Per-utterance key-frame statistics (CSV)");
  analyze_cmd->add_option("--ckpt", analyze.ckpt_dir, "Checkpoint directory")
      ->required();
  analyze_cmd->add_option("--data", analyze.data_path, "Dataset file")
      ->required();
  auto* analyze_w_opt =
      analyze_cmd->add_option("--w", analyze_w, "Local context width");
  analyze_cmd->add_option("--mode", analyze.mode, "dense, kfsa or kfds");
  analyze_cmd->add_option("--emit", analyze.emit_path, "CSV path, - for stdout");

  kfc::BenchArgs bench;
  auto* bench_cmd =
      app.add_subcommand("bench", "Dense vs key-frame-length attention cost");
  bench_cmd->add_option("--T", bench.num_frames, "Sequence length");
  bench_cmd->add_option("--d", bench.d_model, "Model width");
  bench_cmd->add_option("--heads", bench.heads, "Attention heads");
  bench_cmd->add_option("--keep-fraction", bench.keep_fraction,
                        "Fraction of frames kept");
  bench_cmd->add_option("--repeat", bench.repeat, "Timing repeats");
  bench_cmd->add_option("--seed", bench.seed, "Weight seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kfc::kExitInvalid;
  }

  const std::size_t threads = kfc::ThreadsFromEnv();
  if (*train_cmd) {
    if (*seed_opt) train.seed = seed;
    return kfc::CmdTrain(train, std::cerr);
  }
  if (*eval_cmd) {
    if (*eval_mode_opt) eval.mode = eval_mode;
    if (*eval_w_opt) eval.w = eval_w;
    if (*eval_kfsa_opt) eval.kfsa_mode = eval_kfsa;
    eval.threads = threads;
    return kfc::CmdEval(eval, std::cout, std::cerr);
  }
  if (*analyze_cmd) {
    if (*analyze_w_opt) analyze.w = analyze_w;
    analyze.threads = threads;
    return kfc::CmdAnalyze(analyze, std::cout, std::cerr);
  }
  return kfc::CmdBench(bench, std::cout, std::cerr);
}
