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

#include "kfc/nn.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

#include "kfc/ops.h"

namespace kfc {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using NodePtr = std::shared_ptr<internal::Node>;

thread_local std::uint64_t g_attention_mults = 0;

ConstMap AsMat(const Buffer& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c));
}

MutMap AsMutMat(Buffer& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

double RoundToFloat(double v) {
  return static_cast<double>(static_cast<float>(v));
}

Tensor Ones(std::size_t n) { return Tensor::Full({n}, 1.0, true); }
Tensor ZerosParam(std::size_t n) { return Tensor::Zeros({n}, true); }

Tensor DenseAttention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t t = q.rows(), d = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Buffer probs(t * t);
  auto p = AsMutMat(probs, t, t);
  p.noalias() = AsMat(q.node()->data, t, d) *
                AsMat(k.node()->data, t, d).transpose();
  p *= scale;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  Buffer out(t * d);
  AsMutMat(out, t, d).noalias() = p * AsMat(v.node()->data, t, d);
  g_attention_mults += 2ull * t * t * d;

  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return internal::MakeResult(
      "scaled_dot_attention", {t, d}, std::move(out), {q, k, v},
      [qn, kn, vn, t, d, scale, probs = std::move(probs)](
          const internal::Node& o) {
        ConstMap d_out = AsMat(o.grad, t, d);
        ConstMap pm = AsMat(probs, t, t);
        if (vn->requires_grad) {
          AsMutMat(vn->GradBuffer(), t, d).noalias() += pm.transpose() * d_out;
        }
        if (!qn->requires_grad && !kn->requires_grad) return;
        RowMat dp = d_out * AsMat(vn->data, t, d).transpose();
        Eigen::VectorXd dot = (dp.array() * pm.array()).rowwise().sum();
        RowMat ds = pm.array() * (dp.colwise() - dot).array();
        ds *= scale;
        if (qn->requires_grad) {
          AsMutMat(qn->GradBuffer(), t, d).noalias() +=
              ds * AsMat(kn->data, t, d);
        }
        if (kn->requires_grad) {
          AsMutMat(kn->GradBuffer(), t, d).noalias() +=
              ds.transpose() * AsMat(qn->data, t, d);
        }
      });
}

Tensor MaskedAttention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const AttentionMask& mask) {
  const std::size_t t = q.rows(), d = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& qd = q.node()->data;
  const auto& kd = k.node()->data;
  const auto& vd = v.node()->data;

  std::vector<std::vector<std::size_t>> cols(t);
  std::vector<std::vector<double>> probs(t);
  Buffer out(t * d, 0.0);
  std::uint64_t nnz = 0;
  for (std::size_t i = 0; i < t; ++i) {
    cols[i] = mask.RowColumns(i);
    if (cols[i].empty()) continue;
    nnz += cols[i].size();
    auto& p = probs[i];
    p.resize(cols[i].size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < cols[i].size(); ++n) {
      const double* qi = qd.data() + i * d;
      const double* kj = kd.data() + cols[i][n] * d;
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      p[n] = s * scale;
      mx = std::max(mx, p[n]);
    }
    double sum = 0;
    for (double& x : p) {
      x = std::exp(x - mx);
      sum += x;
    }
    double* oi = out.data() + i * d;
    for (std::size_t n = 0; n < cols[i].size(); ++n) {
      p[n] /= sum;
      const double* vj = vd.data() + cols[i][n] * d;
      for (std::size_t c = 0; c < d; ++c) oi[c] += p[n] * vj[c];
    }
  }
  g_attention_mults += 2ull * nnz * d;

  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return internal::MakeResult(
      "scaled_dot_attention", {t, d}, std::move(out), {q, k, v},
      [qn, kn, vn, t, d, scale, cols = std::move(cols),
       probs = std::move(probs)](const internal::Node& o) {
        std::vector<double> dp;
        for (std::size_t i = 0; i < t; ++i) {
          if (cols[i].empty()) continue;
          const double* doi = o.grad.data() + i * d;
          const auto& p = probs[i];
          dp.assign(cols[i].size(), 0.0);
          double dot = 0;
          for (std::size_t n = 0; n < cols[i].size(); ++n) {
            const std::size_t j = cols[i][n];
            const double* vj = vn->data.data() + j * d;
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) s += doi[c] * vj[c];
            dp[n] = s;
            dot += s * p[n];
            if (vn->requires_grad) {
              double* gv = vn->GradBuffer().data() + j * d;
              for (std::size_t c = 0; c < d; ++c) gv[c] += p[n] * doi[c];
            }
          }
          for (std::size_t n = 0; n < cols[i].size(); ++n) {
            const std::size_t j = cols[i][n];
            const double ds = p[n] * (dp[n] - dot) * scale;
            if (qn->requires_grad) {
              double* gq = qn->GradBuffer().data() + i * d;
              const double* kj = kn->data.data() + j * d;
              for (std::size_t c = 0; c < d; ++c) gq[c] += ds * kj[c];
            }
            if (kn->requires_grad) {
              double* gk = kn->GradBuffer().data() + j * d;
              const double* qi = qn->data.data() + i * d;
              for (std::size_t c = 0; c < d; ++c) gk[c] += ds * qi[c];
            }
          }
        }
      });
}

}  // namespace

std::uint64_t AttentionMultiplies() { return g_attention_mults; }
void ResetAttentionMultiplies() { g_attention_mults = 0; }

Tensor ScaledDotAttention(const Tensor& q, const Tensor& k, const Tensor& v,
                          const AttentionMask* mask) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("scaled_dot_attention: Q " + ShapeToString(q.shape()) +
                         ", K " + ShapeToString(k.shape()) + ", V " +
                         ShapeToString(v.shape()) + " must be equal T x d");
  }
  if (mask && mask->size() != q.rows()) {
    throw DimensionError("scaled_dot_attention: mask is " +
                         std::to_string(mask->size()) + "x" +
                         std::to_string(mask->size()) + " for " +
                         std::to_string(q.rows()) + " frames");
  }
  if (mask == nullptr || mask->AllOnes()) return DenseAttention(q, k, v);
  return MaskedAttention(q, k, v, *mask);
}

Tensor XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> values(fan_in * fan_out);
  for (double& x : values) x = RoundToFloat(dist(rng));
  return Tensor::FromData({fan_in, fan_out}, std::move(values), true);
}

AttentionParams AttentionParams::Init(std::size_t d_model,
                                      std::size_t num_heads, Rng& rng) {
  if (num_heads == 0 || d_model % num_heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " is not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  AttentionParams p;
  p.w_q = XavierUniform(d_model, d_model, rng);
  p.w_k = XavierUniform(d_model, d_model, rng);
  p.w_v = XavierUniform(d_model, d_model, rng);
  p.w_o = XavierUniform(d_model, d_model, rng);
  p.num_heads = num_heads;
  return p;
}

void AttentionParams::Collect(const std::string& prefix,
                              std::vector<NamedParam>* out) const {
  out->push_back({prefix + ".w_q", w_q});
  out->push_back({prefix + ".w_k", w_k});
  out->push_back({prefix + ".w_v", w_v});
  out->push_back({prefix + ".w_o", w_o});
}

Tensor MultiHeadAttention(const Tensor& x, const AttentionMask* mask,
                          const AttentionParams& params) {
  if (params.num_heads == 0 || params.d_model() % params.num_heads != 0) {
    throw DimensionError("multi_head_attention: d_model " +
                         std::to_string(params.d_model()) +
                         " not divisible by " +
                         std::to_string(params.num_heads) + " heads");
  }
  Tensor q = MatMul(x, params.w_q);
  Tensor k = MatMul(x, params.w_k);
  Tensor v = MatMul(x, params.w_v);
  if (params.num_heads == 1) {
    return MatMul(ScaledDotAttention(q, k, v, mask), params.w_o);
  }
  const std::size_t dh = params.head_dim();
  std::vector<Tensor> heads;
  heads.reserve(params.num_heads);
  for (std::size_t h = 0; h < params.num_heads; ++h) {
    heads.push_back(ScaledDotAttention(SliceCols(q, h * dh, dh),
                                       SliceCols(k, h * dh, dh),
                                       SliceCols(v, h * dh, dh), mask));
  }
  return MatMul(ConcatCols(heads), params.w_o);
}

FeedForwardParams FeedForwardParams::Init(std::size_t d_model,
                                          std::size_t ffn_dim, Rng& rng) {
  FeedForwardParams p;
  p.ln_gamma = Ones(d_model);
  p.ln_beta = ZerosParam(d_model);
  p.w1 = XavierUniform(d_model, ffn_dim, rng);
  p.b1 = ZerosParam(ffn_dim);
  p.w2 = XavierUniform(ffn_dim, d_model, rng);
  p.b2 = ZerosParam(d_model);
  return p;
}

void FeedForwardParams::Collect(const std::string& prefix,
                                std::vector<NamedParam>* out) const {
  out->push_back({prefix + ".ln_gamma", ln_gamma});
  out->push_back({prefix + ".ln_beta", ln_beta});
  out->push_back({prefix + ".w1", w1});
  out->push_back({prefix + ".b1", b1});
  out->push_back({prefix + ".w2", w2});
  out->push_back({prefix + ".b2", b2});
}

Tensor FeedForward(const Tensor& x, const FeedForwardParams& params,
                   bool half_step) {
  Tensor h = LayerNorm(x, params.ln_gamma, params.ln_beta);
  h = Swish(Linear(h, params.w1, &params.b1));
  h = Linear(h, params.w2, &params.b2);
  return Add(x, half_step ? Scale(h, 0.5) : h);
}

ConvModuleParams ConvModuleParams::Init(std::size_t d_model,
                                        std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0) {
    throw std::invalid_argument("conv kernel size must be odd, got " +
                                std::to_string(kernel));
  }
  ConvModuleParams p;
  p.ln_gamma = Ones(d_model);
  p.ln_beta = ZerosParam(d_model);
  p.pw_in = XavierUniform(d_model, 2 * d_model, rng);
  p.pw_in_bias = ZerosParam(2 * d_model);
  p.dw_kernel = XavierUniform(kernel, d_model, rng);
  p.dw_bias = ZerosParam(d_model);
  p.dw_ln_gamma = Ones(d_model);
  p.dw_ln_beta = ZerosParam(d_model);
  p.pw_out = XavierUniform(d_model, d_model, rng);
  p.pw_out_bias = ZerosParam(d_model);
  return p;
}

void ConvModuleParams::Collect(const std::string& prefix,
                               std::vector<NamedParam>* out) const {
  out->push_back({prefix + ".ln_gamma", ln_gamma});
  out->push_back({prefix + ".ln_beta", ln_beta});
  out->push_back({prefix + ".pw_in", pw_in});
  out->push_back({prefix + ".pw_in_bias", pw_in_bias});
  out->push_back({prefix + ".dw_kernel", dw_kernel});
  out->push_back({prefix + ".dw_bias", dw_bias});
  out->push_back({prefix + ".dw_ln_gamma", dw_ln_gamma});
  out->push_back({prefix + ".dw_ln_beta", dw_ln_beta});
  out->push_back({prefix + ".pw_out", pw_out});
  out->push_back({prefix + ".pw_out_bias", pw_out_bias});
}

Tensor ConvModule(const Tensor& x, const ConvModuleParams& params) {
  Tensor h = LayerNorm(x, params.ln_gamma, params.ln_beta);
  h = Glu(Linear(h, params.pw_in, &params.pw_in_bias));
  h = DepthwiseConv1d(h, params.dw_kernel, params.dw_bias);
  h = Swish(LayerNorm(h, params.dw_ln_gamma, params.dw_ln_beta));
  h = Linear(h, params.pw_out, &params.pw_out_bias);
  return Add(x, h);
}

ConformerBlockParams ConformerBlockParams::Init(std::size_t d_model,
                                                std::size_t num_heads,
                                                std::size_t ffn_dim,
                                                std::size_t kernel, Rng& rng) {
  ConformerBlockParams p;
  p.ffn1 = FeedForwardParams::Init(d_model, ffn_dim, rng);
  p.attn_ln_gamma = Ones(d_model);
  p.attn_ln_beta = ZerosParam(d_model);
  p.attn = AttentionParams::Init(d_model, num_heads, rng);
  p.conv = ConvModuleParams::Init(d_model, kernel, rng);
  p.ffn2 = FeedForwardParams::Init(d_model, ffn_dim, rng);
  p.out_ln_gamma = Ones(d_model);
  p.out_ln_beta = ZerosParam(d_model);
  return p;
}

void ConformerBlockParams::Collect(const std::string& prefix,
                                   std::vector<NamedParam>* out) const {
  ffn1.Collect(prefix + ".ffn1", out);
  out->push_back({prefix + ".attn_ln_gamma", attn_ln_gamma});
  out->push_back({prefix + ".attn_ln_beta", attn_ln_beta});
  attn.Collect(prefix + ".attn", out);
  conv.Collect(prefix + ".conv", out);
  ffn2.Collect(prefix + ".ffn2", out);
  out->push_back({prefix + ".out_ln_gamma", out_ln_gamma});
  out->push_back({prefix + ".out_ln_beta", out_ln_beta});
}

Tensor ConformerBlock(const Tensor& x, const AttentionMask* mask,
                      const ConformerBlockParams& params) {
  Tensor h = FeedForward(x, params.ffn1, /*half_step=*/true);
  Tensor a = LayerNorm(h, params.attn_ln_gamma, params.attn_ln_beta);
  h = Add(h, MultiHeadAttention(a, mask, params.attn));
  h = ConvModule(h, params.conv);
  h = FeedForward(h, params.ffn2, /*half_step=*/true);
  return LayerNorm(h, params.out_ln_gamma, params.out_ln_beta);
}

std::size_t SubsampledLength(std::size_t num_frames, std::size_t factor) {
  if (factor != 1 && factor != 2 && factor != 4) {
    throw std::invalid_argument("subsample factor must be 1, 2 or 4, got " +
                                std::to_string(factor));
  }
  if (num_frames == 0) throw std::invalid_argument("empty input: T0 = 0");
  return (num_frames + factor - 1) / factor;
}

FrontendParams FrontendParams::Init(std::size_t feat_dim, std::size_t d_model,
                                    std::size_t factor, Rng& rng) {
  SubsampledLength(1, factor);  // validates factor
  FrontendParams p;
  p.factor = factor;
  std::size_t in = feat_dim;
  for (std::size_t f = factor; f > 1; f /= 2) {
    p.conv_w.push_back(XavierUniform(3 * in, d_model, rng));
    p.conv_b.push_back(ZerosParam(d_model));
    in = d_model;
  }
  p.out_w = XavierUniform(in, d_model, rng);
  p.out_b = ZerosParam(d_model);
  return p;
}

void FrontendParams::Collect(const std::string& prefix,
                             std::vector<NamedParam>* out) const {
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out->push_back({prefix + ".conv" + std::to_string(i) + ".w", conv_w[i]});
    out->push_back({prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]});
  }
  out->push_back({prefix + ".out_w", out_w});
  out->push_back({prefix + ".out_b", out_b});
}

Tensor SubsampleFrontend(const Tensor& features, const FrontendParams& params) {
  if (features.rank() != 2) {
    throw DimensionError("subsample_frontend: expected T x F features, got " +
                         ShapeToString(features.shape()));
  }
  Tensor h = features;
  for (std::size_t i = 0; i < params.conv_w.size(); ++i) {
    h = UnfoldFrames(h, /*kernel=*/3, /*stride=*/2, /*pad=*/1);
    h = Swish(Linear(h, params.conv_w[i], &params.conv_b[i]));
  }
  return Linear(h, params.out_w, &params.out_b);
}

Tensor PositionalEncoding(std::size_t num_frames, std::size_t d_model) {
  std::vector<double> table(num_frames * d_model);
  for (std::size_t pos = 0; pos < num_frames; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double expo =
          static_cast<double>(i - i % 2) / static_cast<double>(d_model);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, expo);
      table[pos * d_model + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::FromData({num_frames, d_model}, std::move(table));
}

}  // namespace kfc
