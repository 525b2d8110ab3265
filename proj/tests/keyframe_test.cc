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

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "kfc/keyframe.h"
#include "kfc/nn.h"
#include "test_util.h"

namespace kfc {
namespace {

using Positions = std::vector<std::size_t>;

KeyFrameSet Keys(Positions p, std::size_t t) {
  KeyFrameSet k;
  k.positions = std::move(p);
  k.num_frames = t;
  return k;
}

Positions Cols(const AttentionMask& m, std::size_t row) {
  return m.RowColumns(row);
}

TEST_CASE("key frame extraction") {
  const int a = 1, c = 3;
  std::vector<int> ids = {0, a, a, 0, 0, c, 0, 0};
  KeyFrameSet k = ExtractKeyFrames(ids);
  CHECK(k.positions == Positions{1, 5});
  CHECK(k.num_frames == 8);
  std::vector<int> blanks(6, 0);
  CHECK(ExtractKeyFrames(blanks).empty());
  std::vector<int> split = {a, 0, a};
  CHECK(ExtractKeyFrames(split).positions == Positions{0, 2});
  std::vector<int> change = {a, c, c};
  CHECK(ExtractKeyFrames(change).positions == Positions{0, 1});
}

TEST_CASE("kfsa mask single key frame") {
  KeyFrameSet k = Keys({2}, 5);
  AttentionMask m = BuildKfsaMask(k, 1, MaskMode::kWindowPlusK);
  for (std::size_t r : {1, 2, 3}) CHECK(Cols(m, r) == Positions{1, 2, 3});
  CHECK_FALSE(m.RowActive(0));
  CHECK_FALSE(m.RowActive(4));
  AttentionMask konly = BuildKfsaMask(k, 1, MaskMode::kKOnly);
  CHECK(konly.CountAllowed() == 1);
  CHECK(konly.allowed(2, 2));
}

TEST_CASE("kfsa mask modes differ as expected") {
  KeyFrameSet k = Keys({1, 8}, 10);
  AttentionMask wk = BuildKfsaMask(k, 1, MaskMode::kWindowPlusK);
  CHECK(Cols(wk, 0) == Positions{0, 1, 2, 8});
  AttentionMask wo = BuildKfsaMask(k, 1, MaskMode::kWindowOnly);
  CHECK(Cols(wo, 0) == Positions{0, 1, 2});
  AttentionMask dense = BuildKfsaMask(k, 1, MaskMode::kDense);
  CHECK(dense.AllOnes());
  CHECK(BuildKfsaMask(Keys({}, 4), 1, MaskMode::kWindowPlusK).CountAllowed() ==
        0);
}

TEST_CASE("literal row semantics opens whole active rows") {
  KeyFrameSet k = Keys({1, 8}, 10);
  AttentionMask m = BuildKfsaMask(k, 1, MaskMode::kWindowPlusK,
                                  MaskSemantics::kLiteralRow);
  CHECK(Cols(m, 0).size() == 10);
  CHECK(Cols(m, 5) == Positions{1, 8});
}

TEST_CASE("mode names round trip") {
  for (MaskMode mode : {MaskMode::kWindowPlusK, MaskMode::kKOnly,
                        MaskMode::kWindowOnly, MaskMode::kDense}) {
    CHECK(ParseMaskMode(ToString(mode)) == mode);
  }
  CHECK_THROWS(ParseMaskMode("bogus"));
}

TEST_CASE("kfds selection") {
  FrameSelection s = SelectKfdsFrames(Keys({2, 7}, 9), 1);
  CHECK(s.kept == Positions{1, 2, 3, 6, 7, 8});
  CHECK(s.drop_ratio == doctest::Approx(1.0 / 3));
  CHECK_FALSE(s.fallback);
  CHECK(SelectKfdsFrames(Keys({2, 3}, 9), 1).kept == Positions{1, 2, 3, 4});
  FrameSelection empty = SelectKfdsFrames(Keys({}, 9), 1);
  CHECK(empty.kept.size() == 9);
  CHECK(empty.drop_ratio == 0.0);
  CHECK(empty.fallback);
  CHECK(SelectKfdsFrames(Keys({0}, 3), 5).kept == Positions{0, 1, 2});
}

TEST_CASE("ctc feasibility") {
  FrameSelection s;
  s.kept = {0, 1, 2, 3, 4, 5, 6};
  CHECK(CheckCtcFeasible(s, 3) == Feasibility::kOk);
  s.kept.pop_back();
  CHECK(CheckCtcFeasible(s, 3) == Feasibility::kFallbackNeeded);
  s.kept.clear();
  CHECK(CheckCtcFeasible(s, 0) == Feasibility::kOk);
}

TEST_CASE("drop ratio statistics") {
  FrameSelection a = SelectKfdsFrames(Keys({2, 7}, 9), 1);
  CHECK(ComputeDropRatioStats(std::vector<FrameSelection>{a}).mean ==
        doctest::Approx(1.0 / 3));
  FrameSelection x, y;
  x.drop_ratio = 0.2;
  y.drop_ratio = 0.6;
  DropRatioStats st = ComputeDropRatioStats(std::vector<FrameSelection>{x, y});
  CHECK(st.mean == doctest::Approx(0.4));
  CHECK(st.min == 0.2);
  CHECK(st.max == 0.6);
  FrameSelection id = SelectKfdsFrames(Keys({}, 4), 0);
  CHECK(ComputeDropRatioStats(std::vector<FrameSelection>{id, id}).mean == 0.0);
  CHECK_THROWS(ComputeDropRatioStats(std::vector<FrameSelection>{}));
}

TEST_CASE("random property sweep") {
  std::mt19937_64 rng(31);
  for (int draw = 0; draw < 300; ++draw) {
    const std::size_t t = 1 + rng() % 32;
    const std::size_t w = rng() % 5;
    std::set<std::size_t> p_set;
    const std::size_t np = rng() % 9;
    for (std::size_t i = 0; i < np; ++i) p_set.insert(rng() % t);
    KeyFrameSet k = Keys({p_set.begin(), p_set.end()}, t);
    FrameSelection s = SelectKfdsFrames(k, w);
    if (!k.empty()) {
      CHECK(s.kept.size() <= std::min(t, (2 * w + 1) * k.size()));
      FrameSelection wider = SelectKfdsFrames(k, w + 1);
      CHECK(std::includes(wider.kept.begin(), wider.kept.end(), s.kept.begin(),
                          s.kept.end()));
    }
    AttentionMask konly = BuildKfsaMask(k, w, MaskMode::kKOnly);
    CHECK(konly.CountAllowed() == k.size() * k.size());
    for (std::size_t a : k.positions) {
      for (std::size_t b : k.positions) CHECK(konly.allowed(a, b));
    }
    const Positions active = ActiveFrames(k, w);
    for (MaskMode mode : {MaskMode::kWindowPlusK, MaskMode::kWindowOnly}) {
      AttentionMask m = BuildKfsaMask(k, w, mode);
      for (std::size_t r = 0; r < t; ++r) {
        const bool in_a =
            std::binary_search(active.begin(), active.end(), r);
        CHECK(m.RowActive(r) == in_a);
      }
    }
  }
}

}  // namespace
}  // namespace kfc
