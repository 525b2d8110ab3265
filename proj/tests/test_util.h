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

// Independent reference implementations used by the test suites. Nothing in
// here calls into the code path it is used to check.

#ifndef KFC_TESTS_TEST_UTIL_H_
#define KFC_TESTS_TEST_UTIL_H_

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kfc/nn.h"
#include "kfc/tensor.h"

namespace kfc::testing {

Tensor RandomTensor(const Shape& shape, Rng& rng, double scale = 1.0,
                    bool requires_grad = false);

// Fills every tensor with N(0, scale^2) values.
void Randomize(std::vector<NamedParam>& params, Rng& rng, double scale);

// sum(r * y) for a fixed random r, which excites every output coordinate.
Tensor RandomProjection(const Tensor& y, std::uint64_t seed);

struct GradCheck {
  double max_rel_error = 0;  // worst per-tensor ||a - n|| / max(||a||, ||n||)
  std::string worst;         // name of that tensor
};

// Central finite differences of `loss_fn` (a scalar) with respect to every
// element of every tensor in `inputs`, compared to reverse-mode gradients.
// Norms below `floor` are clamped in the denominator.
GradCheck CheckGradients(const std::function<Tensor()>& loss_fn,
                         std::vector<NamedParam> inputs, double h = 1e-5,
                         double floor = 1e-6);

// Plain triple loop.
std::vector<double> ReferenceMatMul(const std::vector<double>& a,
                                    const std::vector<double>& b,
                                    std::size_t m, std::size_t k,
                                    std::size_t n);

// log P(labels) by summing over all V^T frame paths whose collapse equals
// `labels`; -inf when no path does.
double BruteForceCtcLogProb(const std::vector<double>& log_probs,
                            std::size_t num_frames, std::size_t vocab,
                            const std::vector<int>& labels, int blank = 0);

// Fresh empty directory under the test's scratch root.
std::string ScratchDir(const std::string& name);

}  // namespace kfc::testing

#endif  // KFC_TESTS_TEST_UTIL_H_
