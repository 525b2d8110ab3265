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

#ifndef KFC_NN_H_
#define KFC_NN_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kfc/keyframe.h"
#include "kfc/tensor.h"

namespace kfc {

using Rng = std::mt19937_64;

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Per-thread count of multiplies spent in attention scores and context
// (QK^T and PV). A dense T x T head of width d adds exactly 2 * T * T * d.
std::uint64_t AttentionMultiplies();
void ResetAttentionMultiplies();

// softmax(Q K^T / sqrt(d)) V for a single head. Without a mask, or with an
// all-ones mask, this is the dense GEMM path. Otherwise only allowed
// (row, col) pairs are computed and rows with no allowed column give zeros.
Tensor ScaledDotAttention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const AttentionMask* mask = nullptr);

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;  // d_model x d_model, no biases
  std::size_t num_heads = 1;

  std::size_t d_model() const { return w_q.rows(); }
  std::size_t head_dim() const { return d_model() / num_heads; }

  static AttentionParams Init(std::size_t d_model, std::size_t num_heads,
                              Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedParam>* out) const;
};

Tensor MultiHeadAttention(const Tensor& x, const AttentionMask* mask,
                          const AttentionParams& params);

struct FeedForwardParams {
  Tensor ln_gamma, ln_beta;
  Tensor w1, b1;  // d_model x ffn_dim
  Tensor w2, b2;  // ffn_dim x d_model

  static FeedForwardParams Init(std::size_t d_model, std::size_t ffn_dim,
                                Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedParam>* out) const;
};

// x + s * W2 swish(W1 LN(x)), s = 0.5 for the macaron half step.
Tensor FeedForward(const Tensor& x, const FeedForwardParams& params,
                   bool half_step);

struct ConvModuleParams {
  Tensor ln_gamma, ln_beta;
  Tensor pw_in, pw_in_bias;    // d_model x 2 d_model
  Tensor dw_kernel, dw_bias;   // kernel x d_model
  Tensor dw_ln_gamma, dw_ln_beta;
  Tensor pw_out, pw_out_bias;  // d_model x d_model

  std::size_t kernel_size() const { return dw_kernel.rows(); }

  static ConvModuleParams Init(std::size_t d_model, std::size_t kernel,
                               Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedParam>* out) const;
};

// LN -> pointwise (2d) -> GLU -> depthwise -> LN -> swish -> pointwise,
// added back to x.
Tensor ConvModule(const Tensor& x, const ConvModuleParams& params);

struct ConformerBlockParams {
  FeedForwardParams ffn1;
  Tensor attn_ln_gamma, attn_ln_beta;
  AttentionParams attn;
  ConvModuleParams conv;
  FeedForwardParams ffn2;
  Tensor out_ln_gamma, out_ln_beta;

  static ConformerBlockParams Init(std::size_t d_model, std::size_t num_heads,
                                   std::size_t ffn_dim, std::size_t kernel,
                                   Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedParam>* out) const;
};

// FFN/2 -> MHSA -> conv -> FFN/2 -> LN. A null mask means dense attention.
Tensor ConformerBlock(const Tensor& x, const AttentionMask* mask,
                      const ConformerBlockParams& params);

// ceil(num_frames / factor) for factor in {1, 2, 4}.
std::size_t SubsampledLength(std::size_t num_frames, std::size_t factor);

struct FrontendParams {
  std::size_t factor = 1;
  // One (weight, bias) pair per stride-2 layer: kernel 3, padding 1.
  std::vector<Tensor> conv_w, conv_b;
  Tensor out_w, out_b;

  static FrontendParams Init(std::size_t feat_dim, std::size_t d_model,
                             std::size_t factor, Rng& rng);
  void Collect(const std::string& prefix, std::vector<NamedParam>* out) const;
};

// features [T0 x F] -> [ceil(T0 / factor) x d_model].
Tensor SubsampleFrontend(const Tensor& features, const FrontendParams& params);

// Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos.
Tensor PositionalEncoding(std::size_t num_frames, std::size_t d_model);

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); values are rounded to
// single precision so that checkpoints are lossless.
Tensor XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace kfc

#endif  // KFC_NN_H_
