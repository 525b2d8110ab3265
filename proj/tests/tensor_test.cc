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
#include <vector>

#include "kfc/ops.h"
#include "kfc/tensor.h"
#include "test_util.h"

namespace kfc {
namespace {

using testing::CheckGradients;
using testing::RandomProjection;
using testing::RandomTensor;

std::vector<double> Values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

TEST_CASE("matmul identity and scalar") {
  Tensor eye = Tensor::Matrix({{1, 0}, {0, 1}});
  Tensor x = Tensor::Matrix({{1, 2}, {3, 4}});
  CHECK(Values(MatMul(eye, x)) == Values(x));
  CHECK(MatMul(Tensor::Matrix({{2}}), Tensor::Matrix({{3}})).item() == 6.0);
}

TEST_CASE("matmul matches triple loop") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = RandomTensor({3, 4}, rng);
    Tensor b = RandomTensor({4, 2}, rng);
    auto ref = testing::ReferenceMatMul(Values(a), Values(b), 3, 4, 2);
    auto got = Values(MatMul(a, b));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(got[i] - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::Zeros({2, 3});
  Tensor b = Tensor::Zeros({2, 3});
  try {
    MatMul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise basics") {
  Rng rng(4);
  Tensor x = RandomTensor({2, 3}, rng);
  CHECK(Values(Add(x, Tensor::Zeros({2, 3}))) == Values(x));
  CHECK(Swish(Tensor::Scalar(0.0)).item() == 0.0);
  CHECK_THROWS_AS(Add(x, Tensor::Zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(Log(Tensor::Scalar(-1.0)), NumericError);
}

TEST_CASE("sigmoid gradient at zero") {
  Tensor x = Tensor::Scalar(0.0, true);
  Sigmoid(x).Backward();
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
  const double h = 1e-5;
  const double fd = (1 / (1 + std::exp(-h)) - 1 / (1 + std::exp(h))) / (2 * h);
  CHECK(std::abs(fd - x.grad()[0]) <= 1e-6);
}

TEST_CASE("softmax examples") {
  auto s = Values(Softmax(Tensor::Matrix({{0, 0, 0}})));
  for (double v : s) CHECK(v == doctest::Approx(1.0 / 3));
  CHECK(Softmax(Tensor::Matrix({{123.4}})).item() == 1.0);

  Tensor mask = Tensor::Matrix({{kMaskedLogit, kMaskedLogit, kMaskedLogit},
                                {0, kMaskedLogit, 0}});
  Tensor x = Tensor::Matrix({{1, 2, 3}, {1, 2, 1}}, true);
  Tensor y = Softmax(x, &mask);
  CHECK(y.at(0, 0) == 0.0);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(0, 2) == 0.0);
  CHECK(y.at(1, 0) == doctest::Approx(0.5));
  CHECK(y.at(1, 1) == 0.0);
  RandomProjection(y, 1).Backward();
  for (std::size_t c = 0; c < 3; ++c) CHECK(x.grad()[c] == 0.0);
}

TEST_CASE("log softmax equals log of softmax") {
  Rng rng(5);
  Tensor x = RandomTensor({4, 6}, rng, 3.0);
  auto a = Values(LogSoftmax(x));
  auto b = Values(Softmax(x));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(std::log(b[i])).epsilon(1e-12));
  }
}

TEST_CASE("gather rows") {
  Tensor x = Tensor::Matrix({{1, 2}, {3, 4}, {5, 6}}, true);
  std::vector<std::size_t> all = {0, 1, 2};
  CHECK(Values(GatherRows(x, all)) == Values(x));
  std::vector<std::size_t> last = {2};
  CHECK(Values(GatherRows(x, last)) == std::vector<double>{5, 6});
  std::vector<std::size_t> sel = {0, 2};
  Sum(GatherRows(x, sel)).Backward();
  CHECK(Values(Tensor::FromData({6}, {x.grad().begin(), x.grad().end()})) ==
        std::vector<double>{1, 1, 0, 0, 1, 1});
  std::vector<std::size_t> bad = {1, 1};
  CHECK_THROWS(GatherRows(x, bad));
}

TEST_CASE("gather backward conserves gradient mass") {
  Rng rng(6);
  Tensor x = RandomTensor({7, 3}, rng, 1.0, true);
  std::vector<std::size_t> idx = {0, 2, 3, 6};
  Tensor y = GatherRows(x, idx);
  Tensor r = RandomTensor(y.shape(), rng);
  Sum(Mul(y, r)).Backward();
  double in = 0, out = 0;
  for (double v : r.data()) in += v;
  for (double v : x.grad()) out += v;
  CHECK(out == doctest::Approx(in).epsilon(1e-14));
}

TEST_CASE("backward basics and accumulation") {
  Tensor x = Tensor::FromData({2}, {1, 2}, true);
  Sum(x).Backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);
  x.ZeroGrad();
  Sum(Mul(x, x)).Backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  Sum(Mul(x, x)).Backward();
  CHECK(x.grad()[1] == 8.0);  // leaves accumulate
}

TEST_CASE("no grad guard records nothing") {
  Tensor x = Tensor::FromData({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor y = Mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("handle semantics and clone") {
  Tensor x = Tensor::FromData({2}, {1, 2});
  Tensor alias = x;
  Tensor copy = x.Clone();
  x.mutable_data()[0] = 7;
  CHECK(alias.data()[0] == 7);
  CHECK(copy.data()[0] == 1);
}

TEST_CASE("non-finite results are rejected") {
  CHECK_THROWS_AS(Exp(Tensor::Scalar(1e6)), NumericError);
}

TEST_CASE("unfold frames layout") {
  Tensor x = Tensor::Matrix({{1}, {2}, {3}, {4}});
  Tensor y = UnfoldFrames(x, 3, 2, 1);
  REQUIRE(y.rows() == 2);
  CHECK(Values(y) == std::vector<double>{0, 1, 2, 2, 3, 4});
}

TEST_CASE("depthwise conv single frame is centre tap") {
  Tensor x = Tensor::Matrix({{2, -1}});
  Tensor k = Tensor::Matrix({{5, 5}, {3, 4}, {7, 7}});
  Tensor b = Tensor::FromData({2}, {0.5, 0});
  auto y = Values(DepthwiseConv1d(x, k, b));
  CHECK(y == std::vector<double>{6.5, -4});
}

TEST_CASE("gradient checker flags a wrong gradient") {
  Rng rng(12);
  Tensor x = RandomTensor({3, 2}, rng, 1.0, true);
  // Detaching one factor halves the reverse-mode gradient of x*x.
  auto result = CheckGradients([&] { return Sum(Mul(x, x.Detach())); },
                               {{"x", x}});
  CHECK(result.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("op gradients match finite differences") {
  Rng rng(11);
  const double tol = 1e-4;
  Tensor a = RandomTensor({3, 4}, rng, 1.0, true);
  Tensor b = RandomTensor({4, 5}, rng, 1.0, true);
  Tensor c = RandomTensor({3, 4}, rng, 1.0, true);
  Tensor bias = RandomTensor({5}, rng, 1.0, true);
  Tensor g = RandomTensor({4}, rng, 1.0, true);
  Tensor be = RandomTensor({4}, rng, 1.0, true);
  Tensor pos = Tensor::FromData(
      {3, 4}, {0.3, 1.2, 2.0, 0.7, 1.1, 0.9, 0.4, 3.0, 1.5, 0.2, 0.8, 2.2},
      true);
  Tensor kern = RandomTensor({3, 4}, rng, 1.0, true);

  auto check = [&](const char* name, std::function<Tensor()> f,
                   std::vector<NamedParam> in) {
    INFO(name);
    CHECK(CheckGradients(f, in).max_rel_error < tol);
  };
  check("matmul", [&] { return RandomProjection(MatMul(a, b), 1); },
        {{"a", a}, {"b", b}});
  check("linear", [&] { return RandomProjection(Linear(a, b, &bias), 2); },
        {{"a", a}, {"b", b}, {"bias", bias}});
  check("mul", [&] { return RandomProjection(Mul(a, c), 3); },
        {{"a", a}, {"c", c}});
  check("sub", [&] { return RandomProjection(Sub(a, c), 3); },
        {{"a", a}, {"c", c}});
  check("swish", [&] { return RandomProjection(Swish(a), 4); }, {{"a", a}});
  check("sigmoid", [&] { return RandomProjection(Sigmoid(a), 4); }, {{"a", a}});
  check("exp", [&] { return RandomProjection(Exp(a), 4); }, {{"a", a}});
  check("log", [&] { return RandomProjection(Log(pos), 4); }, {{"pos", pos}});
  check("softmax", [&] { return RandomProjection(Softmax(a), 5); }, {{"a", a}});
  check("log_softmax", [&] { return RandomProjection(LogSoftmax(a), 5); },
        {{"a", a}});
  check("transpose", [&] { return RandomProjection(Transpose(a), 6); },
        {{"a", a}});
  check("layer_norm",
        [&] { return RandomProjection(LayerNorm(a, g, be), 7); },
        {{"a", a}, {"g", g}, {"be", be}});
  check("glu", [&] { return RandomProjection(Glu(a), 8); }, {{"a", a}});
  check("dwconv",
        [&] { return RandomProjection(DepthwiseConv1d(a, kern, g), 9); },
        {{"a", a}, {"kern", kern}, {"g", g}});
  check("unfold", [&] { return RandomProjection(UnfoldFrames(a, 3, 2, 1), 10); },
        {{"a", a}});
  check("concat_slice",
        [&] {
          return RandomProjection(ConcatCols({SliceCols(a, 1, 2), c}), 11);
        },
        {{"a", a}, {"c", c}});
  check("mean_scale", [&] { return Mean(Scale(Mul(a, a), 0.3)); },
        {{"a", a}});
}

}  // namespace
}  // namespace kfc
