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

#ifndef KFC_DATA_H_
#define KFC_DATA_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kfc/ctc.h"
#include "kfc/tensor.h"

namespace kfc {

// Speech-like toy task: every token is a fixed random pattern of
// `pattern_len` frames, and tokens are separated by near-silent gaps.
struct SyntheticTaskSpec {
  std::size_t vocab_size = 9;  // includes blank
  std::size_t feat_dim = 16;
  std::size_t pattern_len = 4;
  std::size_t gap_min = 2;
  std::size_t gap_max = 10;
  std::size_t label_min = 3;
  std::size_t label_max = 10;
  double noise_sigma = 0.1;
  std::size_t num_utterances = 2200;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument naming the violated constraint.
  void Validate() const;
};

struct Utterance {
  std::string id;
  std::size_t num_frames = 0;
  std::vector<float> features;  // num_frames x feat_dim, row-major
  LabelSeq labels;

  Tensor FeatureTensor(std::size_t feat_dim) const;
  bool operator==(const Utterance&) const = default;
};

struct Dataset {
  std::size_t feat_dim = 0;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool operator==(const Dataset&) const = default;
};

Dataset GenerateSynthetic(const SyntheticTaskSpec& spec);

class DatasetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian: "KFC1", u32 count, u32 feat_dim, then per utterance
// u32 T0, u32 U, T0*feat_dim f32 features, U u32 labels.
void SaveDataset(const Dataset& dataset, const std::string& path);
// `expected_feat_dim`, when given, must match the file header.
Dataset LoadDataset(const std::string& path,
                    std::optional<std::size_t> expected_feat_dim = {});

struct Batch {
  Tensor features;                   // B x T_max x F, zero padded
  std::vector<std::size_t> lengths;  // true frame counts
  std::vector<LabelSeq> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return lengths.size(); }
  // Unpadded T x F features of batch entry `b`.
  Tensor Features(std::size_t b) const;
};

// Consecutive chunks of at most `max_batch` utterances, order preserved.
std::vector<Batch> MakeBatches(std::span<const Utterance> utterances,
                               std::size_t feat_dim, std::size_t max_batch);

// Deterministic shuffled split; the first round(n * train_fraction) shuffled
// utterances form the training side.
std::pair<Dataset, Dataset> SplitDataset(const Dataset& dataset,
                                         double train_fraction,
                                         std::uint64_t seed);

}  // namespace kfc

#endif  // KFC_DATA_H_
