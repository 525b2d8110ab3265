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

#ifndef KFC_CTC_H_
#define KFC_CTC_H_

#include <cstddef>
#include <span>
#include <vector>

#include "kfc/keyframe.h"
#include "kfc/tensor.h"

namespace kfc {

using LabelSeq = std::vector<int>;

// Throws std::invalid_argument unless every id is in (blank, vocab).
void ValidateLabels(std::span<const int> labels, std::size_t vocab_size,
                    int blank_id = kBlankId);

// Fewest frames any CTC alignment of `labels` needs: U plus one blank between
// each pair of equal neighbours.
std::size_t MinCtcFrames(std::span<const int> labels);

struct CtcResult {
  // Scalar -log P(labels | log_probs). When infeasible the value is +inf and
  // backward contributes nothing.
  Tensor loss;
  bool feasible = true;

  double value() const { return loss.item(); }
};

// Forward-backward over the 2U+1 blank-interleaved label sequence, in log
// space. `log_probs` is T x V, log-softmax normalized per row.
CtcResult CtcLoss(const Tensor& log_probs, std::span<const int> labels,
                  int blank_id = kBlankId);

// Per-frame argmax; ties go to the smallest id.
std::vector<int> ArgmaxFrameLabels(const Tensor& log_probs);

// Best path: argmax, collapse repeats, drop blanks.
LabelSeq CtcGreedyDecode(const Tensor& log_probs, int blank_id = kBlankId);
LabelSeq CollapseFrameLabels(std::span<const int> frame_ids,
                             int blank_id = kBlankId);

struct EditStats {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  double rate = 0;  // errors / max(1, |ref|)

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Unit-cost Levenshtein alignment of `hyp` against `ref`.
EditStats EditDistance(std::span<const int> hyp, std::span<const int> ref);

}  // namespace kfc

#endif  // KFC_CTC_H_
