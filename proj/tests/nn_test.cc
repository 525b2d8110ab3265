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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "kfc/keyframe.h"
#include "kfc/nn.h"
#include "kfc/ops.h"
#include "test_util.h"

namespace kfc {
namespace {

using testing::CheckGradients;
using testing::RandomProjection;
using testing::RandomTensor;

std::vector<double> Values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

Tensor Identity(std::size_t n) {
  Tensor t = Tensor::Zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1;
  return t;
}

void ZeroAll(std::vector<NamedParam>& params) {
  for (auto& p : params) {
    for (double& v : p.tensor.mutable_data()) v = 0;
  }
}

TEST_CASE("attention over one frame returns V") {
  Rng rng(1);
  Tensor q = RandomTensor({1, 4}, rng), k = RandomTensor({1, 4}, rng);
  Tensor v = RandomTensor({1, 4}, rng);
  auto out = Values(ScaledDotAttention(q, k, v));
  auto ref = Values(v);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(ref[i]));
}

TEST_CASE("attention with equal keys averages V") {
  Rng rng(2);
  Tensor q = RandomTensor({5, 3}, rng);
  Tensor k = Tensor::Full({5, 3}, 0.7);
  Tensor v = RandomTensor({5, 3}, rng);
  Tensor out = ScaledDotAttention(q, k, v);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < 5; ++r) mean += v.at(r, c) / 5;
    for (std::size_t r = 0; r < 5; ++r) {
      CHECK(out.at(r, c) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked rows give zero output and dense mask equals no mask") {
  Rng rng(3);
  Tensor q = RandomTensor({4, 3}, rng), k = RandomTensor({4, 3}, rng);
  Tensor v = RandomTensor({4, 3}, rng);
  AttentionMask mask(4, MaskMode::kWindowPlusK, 1);
  mask.set(0, 0);
  mask.set(0, 2);
  mask.set(2, 1);
  Tensor out = ScaledDotAttention(q, k, v, &mask);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(out.at(1, c) == 0.0);
    CHECK(out.at(3, c) == 0.0);
    CHECK(out.at(2, c) == doctest::Approx(v.at(1, c)));
  }
  AttentionMask dense = AttentionMask::Dense(4);
  CHECK(Values(ScaledDotAttention(q, k, v, &dense)) ==
        Values(ScaledDotAttention(q, k, v)));
}

TEST_CASE("mask monotonicity") {
  Rng rng(4);
  Tensor q = RandomTensor({6, 4}, rng), k = RandomTensor({6, 4}, rng);
  Tensor v = RandomTensor({6, 4}, rng);
  AttentionMask a(6, MaskMode::kWindowPlusK, 1);
  a.set(0, 1);
  a.set(2, 2);
  a.set(2, 5);
  a.set(4, 0);
  AttentionMask b = a;
  b.set(4, 3);  // only row 4 changes
  b.set(5, 5);  // row 5 was empty
  Tensor ya = ScaledDotAttention(q, k, v, &a);
  Tensor yb = ScaledDotAttention(q, k, v, &b);
  for (std::size_t r : {0, 1, 2, 3}) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(ya.at(r, c) == yb.at(r, c));
  }
}

TEST_CASE("attention multiply counts") {
  Rng rng(5);
  Tensor q = RandomTensor({7, 3}, rng), k = RandomTensor({7, 3}, rng);
  Tensor v = RandomTensor({7, 3}, rng);
  ResetAttentionMultiplies();
  ScaledDotAttention(q, k, v);
  CHECK(AttentionMultiplies() == 2u * 7 * 7 * 3);
  AttentionMask mask(7, MaskMode::kWindowPlusK, 1);
  mask.set(0, 0);
  mask.set(0, 1);
  mask.set(3, 6);
  ResetAttentionMultiplies();
  ScaledDotAttention(q, k, v, &mask);
  CHECK(AttentionMultiplies() == 2u * 3 * 3);
}

TEST_CASE("single-head identity projections equal plain attention") {
  Rng rng(6);
  AttentionParams p = AttentionParams::Init(4, 1, rng);
  p.w_q = Identity(4);
  p.w_k = Identity(4);
  p.w_v = Identity(4);
  p.w_o = Identity(4);
  Tensor x = RandomTensor({5, 4}, rng);
  auto a = Values(MultiHeadAttention(x, nullptr, p));
  auto b = Values(ScaledDotAttention(x, x, x));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
  for (double v : Values(MultiHeadAttention(Tensor::Zeros({5, 4}), nullptr, p))) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("permuting heads with matching output rows is a no-op") {
  Rng rng(7);
  const std::size_t d = 6, h = 3, dh = 2;
  AttentionParams p = AttentionParams::Init(d, h, rng);
  const std::vector<std::size_t> perm = {2, 0, 1};
  AttentionParams q = p;
  auto permute_cols = [&](const Tensor& w) {
    Tensor out = Tensor::Zeros({d, d});
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t head = 0; head < h; ++head) {
        for (std::size_t j = 0; j < dh; ++j) {
          out.mutable_data()[r * d + head * dh + j] =
              w.at(r, perm[head] * dh + j);
        }
      }
    }
    return out;
  };
  Tensor wo = Tensor::Zeros({d, d});
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t j = 0; j < dh; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        wo.mutable_data()[(head * dh + j) * d + c] =
            p.w_o.at(perm[head] * dh + j, c);
      }
    }
  }
  q.w_q = permute_cols(p.w_q);
  q.w_k = permute_cols(p.w_k);
  q.w_v = permute_cols(p.w_v);
  q.w_o = wo;
  Tensor x = RandomTensor({5, d}, rng);
  auto a = Values(MultiHeadAttention(x, nullptr, p));
  auto b = Values(MultiHeadAttention(x, nullptr, q));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("feed forward residual and half step") {
  Rng rng(8);
  FeedForwardParams p = FeedForwardParams::Init(4, 8, rng);
  Tensor x = RandomTensor({3, 4}, rng);
  auto full = Values(FeedForward(x, p, false));
  auto half = Values(FeedForward(x, p, true));
  auto xv = Values(x);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    CHECK(half[i] - xv[i] == doctest::Approx(0.5 * (full[i] - xv[i])));
  }
  std::vector<NamedParam> params;
  p.Collect("ffn", &params);
  ZeroAll(params);
  CHECK(Values(FeedForward(x, p, false)) == xv);
}

TEST_CASE("conv module residual and single-frame centre tap") {
  Rng rng(9);
  ConvModuleParams p = ConvModuleParams::Init(4, 3, rng);
  Tensor x = RandomTensor({1, 4}, rng);
  // A kernel with only the centre tap gives the same single-frame output.
  ConvModuleParams centre = p;
  centre.dw_kernel = p.dw_kernel.Clone();
  for (std::size_t c = 0; c < 4; ++c) {
    centre.dw_kernel.mutable_data()[c] = 0;
    centre.dw_kernel.mutable_data()[2 * 4 + c] = 0;
  }
  CHECK(Values(ConvModule(x, p)) == Values(ConvModule(x, centre)));
  std::vector<NamedParam> params;
  p.Collect("conv", &params);
  ZeroAll(params);
  Tensor y = RandomTensor({5, 4}, rng);
  CHECK(Values(ConvModule(y, p)) == Values(y));
}

TEST_CASE("conformer block with zero sublayers is a layer norm") {
  Rng rng(10);
  ConformerBlockParams p = ConformerBlockParams::Init(4, 2, 8, 3, rng);
  std::vector<NamedParam> params;
  p.Collect("blk", &params);
  ZeroAll(params);
  for (double& v : p.out_ln_gamma.mutable_data()) v = 1;
  Tensor x = RandomTensor({5, 4}, rng);
  auto a = Values(ConformerBlock(x, nullptr, p));
  auto b = Values(LayerNorm(x, Tensor::Full({4}, 1), Tensor::Zeros({4})));
  CHECK(a == b);
}

TEST_CASE("conformer block dense mask equals no mask") {
  Rng rng(11);
  ConformerBlockParams p = ConformerBlockParams::Init(8, 2, 16, 3, rng);
  Tensor x = RandomTensor({6, 8}, rng);
  AttentionMask dense = AttentionMask::Dense(6);
  CHECK(Values(ConformerBlock(x, &dense, p)) ==
        Values(ConformerBlock(x, nullptr, p)));
}

TEST_CASE("conformer block gradients match finite differences") {
  Rng rng(12);
  ConformerBlockParams p = ConformerBlockParams::Init(4, 2, 8, 3, rng);
  std::vector<NamedParam> params;
  p.Collect("blk", &params);
  testing::Randomize(params, rng, 0.5);
  Tensor x = RandomTensor({5, 4}, rng);
  params.push_back({"x", x});
  AttentionMask mask(5, MaskMode::kWindowPlusK, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    mask.set(r, r);
    mask.set(r, r + 1);
  }
  for (const AttentionMask* m : {static_cast<const AttentionMask*>(nullptr),
                                 static_cast<const AttentionMask*>(&mask)}) {
    auto result = CheckGradients(
        [&] { return RandomProjection(ConformerBlock(x, m, p), 3); }, params);
    INFO(result.worst);
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("frontend lengths") {
  CHECK(SubsampledLength(10, 1) == 10);
  CHECK(SubsampledLength(10, 2) == 5);
  CHECK(SubsampledLength(10, 4) == 3);
  CHECK_THROWS(SubsampledLength(0, 2));
  CHECK_THROWS(SubsampledLength(10, 3));
  Rng rng(13);
  for (std::size_t factor : {1u, 2u, 4u}) {
    FrontendParams p = FrontendParams::Init(3, 8, factor, rng);
    CHECK(p.conv_w.size() == (factor == 1 ? 0u : factor == 2 ? 1u : 2u));
    for (std::size_t t0 : {1u, 7u, 10u}) {
      Tensor y = SubsampleFrontend(RandomTensor({t0, 3}, rng), p);
      CHECK(y.rows() == SubsampledLength(t0, factor));
      CHECK(y.cols() == 8);
    }
  }
}

TEST_CASE("frontend gradients match finite differences") {
  Rng rng(14);
  FrontendParams p = FrontendParams::Init(3, 4, 4, rng);
  std::vector<NamedParam> params;
  p.Collect("fe", &params);
  Tensor x = RandomTensor({9, 3}, rng);
  auto result = CheckGradients(
      [&] { return RandomProjection(SubsampleFrontend(x, p), 5); }, params);
  INFO(result.worst);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("positional encoding") {
  Tensor pe = PositionalEncoding(20, 6);
  for (std::size_t c = 0; c < 6; ++c) CHECK(pe.at(0, c) == (c % 2 ? 1.0 : 0.0));
  for (double v : Values(pe)) CHECK(std::abs(v) <= 1.0);
  CHECK(Values(pe) == Values(PositionalEncoding(20, 6)));
  CHECK(pe.at(3, 0) == doctest::Approx(std::sin(3.0)));
}

TEST_CASE("xavier init is deterministic and on the float grid") {
  Rng a(15), b(15);
  Tensor x = XavierUniform(8, 4, a), y = XavierUniform(8, 4, b);
  CHECK(Values(x) == Values(y));
  const double bound = std::sqrt(6.0 / 12.0);
  for (double v : Values(x)) {
    CHECK(std::abs(v) <= bound);
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

}  // namespace
}  // namespace kfc
