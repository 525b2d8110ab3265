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

#ifndef KFC_COMMANDS_H_
#define KFC_COMMANDS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"

#include "kfc/data.h"
#include "kfc/model.h"

namespace kfc {

// Everything a training run needs, persisted as one JSON document:
//   {"model": {...}, "task": {...}, "train_fraction": f, "data_path": "..."}
// An empty data_path means "generate the synthetic task".
struct RunConfig {
  ModelConfig model;
  SyntheticTaskSpec task;
  double train_fraction = 2000.0 / 2200.0;
  std::string data_path;

  void Validate() const;
};

nlohmann::json ToJson(const SyntheticTaskSpec& spec);
SyntheticTaskSpec TaskSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const RunConfig& config);
// Unknown keys at any level are rejected with ConfigError.
RunConfig RunConfigFromJson(const nlohmann::json& j);
RunConfig LoadRunConfig(const std::string& path);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides model.seed
};

// Writes metrics.csv, manifest.json, weights.bin, config.json plus the
// train.kfc/heldout.kfc splits into out_dir. Progress goes to `log`.
int CmdTrain(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  std::string ckpt_dir;
  std::string data_path;
  std::optional<std::string> mode;
  std::optional<std::size_t> w;
  std::optional<std::string> kfsa_mode;
  std::size_t threads = 1;
};

// Prints {"ter", "drop_ratio_mean", "fallback_count", "t_prime_mean"}.
int CmdEval(const EvalArgs& args, std::ostream& out, std::ostream& log);

struct AnalyzeArgs {
  std::string ckpt_dir;
  std::string data_path;
  std::optional<std::size_t> w;
  std::string mode = "kfds";
  std::string emit_path;  // "-" or empty writes to `out`
  std::size_t threads = 1;
};

inline constexpr const char* kAnalyzeCsvHeader =
    "utt_id,T,U,P,w,mode,kept,drop_ratio,fallback";

// One CSV row per utterance followed by a "summary" row of means (the
// fallback column of the summary holds the fallback count).
int CmdAnalyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& log);

struct BenchArgs {
  std::size_t num_frames = 1024;
  std::size_t d_model = 256;
  std::size_t heads = 4;
  double keep_fraction = 0.4;
  std::size_t repeat = 5;
  std::uint64_t seed = 1;
};

struct BenchResult {
  std::uint64_t dense_mults = 0;
  std::uint64_t sparse_mults = 0;
  double ratio = 0;
  double dense_ms = 0;
  double sparse_ms = 0;
};

// Dense multi-head attention over T frames against the same layer over the
// first ceil(F * T) frames. Throws std::invalid_argument on bad arguments.
BenchResult RunBench(const BenchArgs& args);
nlohmann::json ToJson(const BenchResult& result);
int CmdBench(const BenchArgs& args, std::ostream& out, std::ostream& log);

}  // namespace kfc

#endif  // KFC_COMMANDS_H_
