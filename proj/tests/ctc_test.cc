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
#include <random>
#include <vector>

#include "kfc/ctc.h"
#include "kfc/ops.h"
#include "test_util.h"

namespace kfc {
namespace {

using testing::BruteForceCtcLogProb;
using testing::RandomTensor;

Tensor LogProbsFromProbs(const std::vector<std::vector<double>>& probs) {
  std::vector<std::vector<double>> logs = probs;
  for (auto& row : logs) {
    for (double& v : row) v = std::log(v);
  }
  return Tensor::Matrix(logs);
}

TEST_CASE("single frame single label") {
  Tensor lp = LogProbsFromProbs({{0.5, 0.5}});
  std::vector<int> labels = {1};
  CtcResult r = CtcLoss(lp, labels);
  CHECK(r.feasible);
  CHECK(r.value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("two frames uniform probabilities") {
  Tensor lp = LogProbsFromProbs({{0.5, 0.5}, {0.5, 0.5}});
  std::vector<int> labels = {1};
  CHECK(CtcLoss(lp, labels).value() ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("infeasible alignment is flagged") {
  Tensor lp = LogProbsFromProbs({{0.4, 0.3, 0.3}}).Detach();
  lp.set_requires_grad(true);
  std::vector<int> labels = {1, 2};
  CtcResult r = CtcLoss(lp, labels);
  CHECK_FALSE(r.feasible);
  CHECK(std::isinf(r.value()));
  r.loss.Backward();
  for (double g : lp.grad()) CHECK(g == 0.0);
  std::vector<int> repeat = {1, 1};
  CHECK(MinCtcFrames(repeat) == 3);
  CHECK_FALSE(CtcLoss(LogProbsFromProbs({{.4, .3, .3}, {.4, .3, .3}}), repeat)
                  .feasible);
}

TEST_CASE("label validation") {
  std::vector<int> ok = {1, 3};
  CHECK_NOTHROW(ValidateLabels(ok, 4));
  std::vector<int> blank = {0, 1};
  CHECK_THROWS(ValidateLabels(blank, 4));
  std::vector<int> big = {4};
  CHECK_THROWS(ValidateLabels(big, 4));
}

TEST_CASE("forward-backward matches path enumeration") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = 1 + rng() % 5;
    const std::size_t v = 2 + rng() % 3;
    const std::size_t u = rng() % 4;
    std::vector<int> labels(u);
    for (int& l : labels) l = 1 + static_cast<int>(rng() % (v - 1));
    Tensor lp = LogSoftmax(RandomTensor({t, v}, rng, 2.0));
    const double ref = BruteForceCtcLogProb(
        {lp.data().begin(), lp.data().end()}, t, v, labels);
    CtcResult r = CtcLoss(lp, labels);
    CHECK(r.feasible == std::isfinite(ref));
    if (r.feasible) CHECK(std::abs(r.value() + ref) <= 1e-8);
  }
}

TEST_CASE("ctc gradient matches finite differences") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = RandomTensor({6, 4}, rng, 1.5);
    std::vector<int> labels = {1 + static_cast<int>(rng() % 3),
                               1 + static_cast<int>(rng() % 3)};
    auto result = testing::CheckGradients(
        [&] { return CtcLoss(LogSoftmax(logits), labels).loss; },
        {{"logits", logits}});
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("argmax and greedy decoding") {
  Tensor lp = LogProbsFromProbs({{0.9, 0.05, 0.05}, {0.2, 0.4, 0.4}});
  CHECK(ArgmaxFrameLabels(lp) == std::vector<int>{0, 1});
  const int a = 1, c = 3;
  std::vector<int> frames = {0, a, a, 0, c};
  CHECK(CollapseFrameLabels(frames) == LabelSeq{a, c});
  std::vector<int> blanks = {0, 0, 0};
  CHECK(CollapseFrameLabels(blanks).empty());
  std::vector<int> split = {a, a, 0, a};
  CHECK(CollapseFrameLabels(split) == LabelSeq{a, a});
  Tensor onehot = LogProbsFromProbs({{.1, .8, .05, .05},
                                     {.1, .8, .05, .05},
                                     {.8, .1, .05, .05},
                                     {.1, .1, .05, .75}});
  CHECK(CtcGreedyDecode(onehot) == LabelSeq{1, 3});
  CHECK(ArgmaxFrameLabels(onehot).size() == 4);
}

TEST_CASE("edit distance examples") {
  std::vector<int> abc = {1, 2, 3}, abd = {1, 2, 4}, ab = {1, 2}, none;
  EditStats same = EditDistance(abc, abc);
  CHECK(same.errors() == 0);
  CHECK(same.rate == 0.0);
  EditStats sub = EditDistance(abd, abc);
  CHECK(sub.substitutions == 1);
  CHECK(sub.errors() == 1);
  EditStats del = EditDistance(none, ab);
  CHECK(del.deletions == 2);
  CHECK(del.rate == 1.0);
  EditStats ins = EditDistance(ab, none);
  CHECK(ins.insertions == 2);
}

TEST_CASE("edit distance is a metric") {
  std::mt19937_64 rng(23);
  auto draw = [&] {
    std::vector<int> s(rng() % 6);
    for (int& x : s) x = 1 + static_cast<int>(rng() % 3);
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    auto x = draw(), y = draw(), z = draw();
    const auto xy = EditDistance(x, y).errors();
    CHECK(xy == EditDistance(y, x).errors());
    CHECK(EditDistance(x, z).errors() <= xy + EditDistance(y, z).errors());
    CHECK((xy == 0) == (x == y));
  }
}

}  // namespace
}  // namespace kfc
