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

#ifndef KFC_OPS_H_
#define KFC_OPS_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kfc/tensor.h"

namespace kfc {

// Additive logit for masked-out positions.
inline constexpr double kMaskedLogit = -1e30;

// Broadcasting is limited to equal shapes and scalar (numel 1) operands.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor AddScalar(const Tensor& a, double value);
Tensor Scale(const Tensor& a, double factor);

Tensor Sigmoid(const Tensor& x);
// x * sigmoid(x)
Tensor Swish(const Tensor& x);
Tensor Relu(const Tensor& x);
Tensor Exp(const Tensor& x);
// Throws NumericError on non-positive input.
Tensor Log(const Tensor& x);

Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& a);

// x * w + b, where x is [T x in], w is [in x out] and b (optional) is [out].
Tensor Linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr);

// Softmax over the last dimension. `additive_mask` must have x's shape with
// entries 0 or kMaskedLogit. Rows where every entry is masked come out as
// exact zeros.
Tensor Softmax(const Tensor& x, const Tensor* additive_mask = nullptr);
Tensor LogSoftmax(const Tensor& x);

// Rows of x at strictly increasing `indices`; backward scatters into the
// selected rows.
Tensor GatherRows(const Tensor& x, std::span<const std::size_t> indices);

Tensor SliceCols(const Tensor& x, std::size_t start, std::size_t count);
Tensor ConcatCols(const std::vector<Tensor>& parts);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);

// Per-row normalization over the last dim with learned gain and shift ([d]).
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);

// Gated linear unit over columns: x[:, :n] * sigmoid(x[:, n:]).
Tensor Glu(const Tensor& x);

// Per-channel temporal convolution, x [T x C], kernel [K x C] with K odd,
// bias [C]. Zero padding of K/2 on both sides keeps length T.
Tensor DepthwiseConv1d(const Tensor& x, const Tensor& kernel,
                       const Tensor& bias);

// Frame stacking for strided temporal convolution: output row t is the
// concatenation of input rows stride*t - pad + k for k in [0, kernel), with
// zero rows outside [0, T). Output length is (T + 2*pad - kernel)/stride + 1.
Tensor UnfoldFrames(const Tensor& x, std::size_t kernel, std::size_t stride,
                    std::size_t pad);

namespace internal {

// Wraps an op result; records `backward` when grad mode is on and any parent
// requires a gradient. Throws NumericError if `data` holds NaN/Inf.
Tensor MakeResult(std::string_view op, Shape shape, Buffer data,
                  std::vector<Tensor> parents, BackwardFn backward);

// Same, without the finiteness check (for flagged infinite losses).
Tensor MakeResultUnchecked(Shape shape, Buffer data,
                           std::vector<Tensor> parents, BackwardFn backward);

}  // namespace internal

}  // namespace kfc

#endif  // KFC_OPS_H_
