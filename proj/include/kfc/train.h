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

#ifndef KFC_TRAIN_H_
#define KFC_TRAIN_H_

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "kfc/data.h"
#include "kfc/model.h"
#include "kfc/nn.h"

namespace kfc {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global L2 norm; <= 0 disables clipping
  // Keep parameters on the float32 grid so checkpoints are lossless.
  bool round_to_float = true;
};

class Adam {
 public:
  Adam(std::vector<NamedParam> params, AdamOptions options);

  // Clips the global gradient norm, applies one update and returns the norm
  // measured before clipping. Parameters without a gradient are skipped.
  double Step();
  void ZeroGrad();

  std::size_t step_count() const { return step_; }

 private:
  std::vector<NamedParam> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss_ctc1 = 0;
  double loss_ctc2 = 0;
  double loss_joint = 0;
  double ter = 0;
  double drop_ratio_mean = 0;
  std::size_t fallback_count = 0;
  double t_prime_mean = 0;
  double t_mean = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "epoch,split,loss_ctc1,loss_ctc2,loss_joint,ter,drop_ratio_mean,"
    "fallback_count";
std::string MetricsCsvRow(const EpochMetrics& m);

struct TrainState {
  explicit TrainState(const ModelConfig& config);

  Model model;
  Adam optimizer;
  Rng rng;  // batch shuffling
};

// Key frames are active from epoch index warmup_epochs on. Throws
// NumericError on a non-finite loss.
EpochMetrics TrainEpoch(TrainState& state, const Dataset& train,
                        std::size_t epoch_index);

// Greedy-decode evaluation. Utterances are spread over `threads` workers;
// results do not depend on the thread count.
EpochMetrics Evaluate(const Model& model, const Dataset& data,
                      bool key_frames_enabled, std::size_t threads = 1);

// Per-utterance view used by key-frame analysis.
struct UtteranceReport {
  std::string id;
  std::size_t num_frames = 0;  // T after subsampling
  std::size_t label_len = 0;
  std::size_t num_key_frames = 0;
  std::size_t num_kept = 0;
  double drop_ratio = 0;
  bool fallback = false;
  std::size_t errors = 0;
};

std::vector<UtteranceReport> AnalyzeUtterances(const Model& model,
                                               const Dataset& data,
                                               std::size_t threads = 1);

// Worker count from KFC_THREADS, default 1.
std::size_t ThreadsFromEnv();

}  // namespace kfc

#endif  // KFC_TRAIN_H_
