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

// Two-encoder CTC model with intermediate-CTC key-frame guidance.
//
//   features -> frontend -> encoder 1 (dense) -> intermediate CTC head
//                                  |
//              key frames from the intermediate argmax
//                                  |
//   Dense: encoder 2 as is
//   KFSA:  encoder 2 with a key-frame attention mask
//   KFDS:  encoder 2 on the kept frames only
//                                  |
//                          final CTC head

#ifndef KFC_MODEL_H_
#define KFC_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "kfc/keyframe.h"
#include "kfc/nn.h"
#include "kfc/tensor.h"

namespace kfc {

enum class EncoderMode { kDense, kKfsa, kKfds };

std::string_view ToString(EncoderMode mode);
// Accepts "dense", "kfsa", "kfds".
EncoderMode ParseEncoderMode(std::string_view name);

// Invalid or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t feat_dim = 16;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t conv_kernel = 7;
  std::size_t enc1_blocks = 2;
  std::size_t enc2_blocks = 2;
  std::size_t subsample_factor = 2;
  std::size_t vocab_size = 9;

  EncoderMode mode = EncoderMode::kDense;
  std::size_t w = 1;
  MaskMode kfsa_mode = MaskMode::kWindowPlusK;
  MaskSemantics mask_semantics = MaskSemantics::kSharedWindow;

  // L = beta0 * (alpha0 * L_ctc1 + alpha1 * L_ctc2) + beta1 * L_ce.
  // Without a decoder L_ce is zero, hence beta0 = 1.
  double alpha0 = 0.5;
  double alpha1 = 0.5;
  double beta0 = 1.0;
  double beta1 = 0.0;

  std::size_t warmup_epochs = 5;
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;

  // Throws ConfigError naming the violated constraint.
  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json ToJson(const ModelConfig& config);
// Missing keys take defaults; unknown keys are rejected.
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

struct ForwardOutput {
  Tensor interctc_logprobs;  // T x V
  Tensor final_logprobs;     // T' x V
  KeyFrameSet key_frames;
  FrameSelection selection;  // identity unless KFDS dropped frames
  std::optional<AttentionMask> mask_used;
  bool fallback = false;
  // Attention multiplies spent in each encoder-2 block.
  std::vector<std::uint64_t> enc2_attention_mults;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Changes only the inference-time key-frame mechanism; weights are shared
  // across modes.
  void SetKeyFrameMode(EncoderMode mode, std::size_t w, MaskMode kfsa_mode);

  // `label_len`, when given, enables the CTC feasibility fallback for KFDS.
  ForwardOutput Forward(const Tensor& features,
                        std::optional<std::size_t> label_len,
                        bool key_frames_enabled) const;

  // Stable order; names are unique.
  std::vector<NamedParam> Parameters() const;
  std::size_t ParameterCount() const;

 private:
  ModelConfig config_;
  FrontendParams frontend_;
  std::vector<ConformerBlockParams> enc1_;
  std::vector<ConformerBlockParams> enc2_;
  Tensor ctc1_w_, ctc1_b_;
  Tensor ctc2_w_, ctc2_b_;
};

// Weighted objective; `l_ce` defaults to zero.
Tensor JointLoss(const Tensor& l_ctc1, const Tensor& l_ctc2,
                 const Tensor* l_ce, const ModelConfig& config);

}  // namespace kfc

#endif  // KFC_MODEL_H_
