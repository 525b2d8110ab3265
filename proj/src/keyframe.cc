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

#include "kfc/keyframe.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace kfc {

std::string_view ToString(MaskMode mode) {
  switch (mode) {
    case MaskMode::kWindowPlusK:
      return "window_plus_k";
    case MaskMode::kKOnly:
      return "k_only";
    case MaskMode::kWindowOnly:
      return "window_only";
    case MaskMode::kDense:
      return "dense";
  }
  return "unknown";
}

MaskMode ParseMaskMode(std::string_view name) {
  for (MaskMode m : {MaskMode::kWindowPlusK, MaskMode::kKOnly,
                     MaskMode::kWindowOnly, MaskMode::kDense}) {
    if (ToString(m) == name) return m;
  }
  throw std::invalid_argument("unknown mask mode '" + std::string(name) +
                              "' (expected window_plus_k, k_only, "
                              "window_only or dense)");
}

AttentionMask::AttentionMask(std::size_t num_frames, MaskMode mode,
                             std::size_t w)
    : num_frames_(num_frames),
      mode_(mode),
      w_(w),
      bits_(num_frames * num_frames, 0) {}

AttentionMask AttentionMask::Dense(std::size_t num_frames) {
  AttentionMask m(num_frames, MaskMode::kDense, 0);
  std::fill(m.bits_.begin(), m.bits_.end(), 1);
  return m;
}

bool AttentionMask::RowActive(std::size_t row) const {
  auto begin = bits_.begin() + static_cast<long>(row * num_frames_);
  return std::any_of(begin, begin + static_cast<long>(num_frames_),
                     [](std::uint8_t b) { return b != 0; });
}

std::vector<std::size_t> AttentionMask::RowColumns(std::size_t row) const {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < num_frames_; ++c) {
    if (allowed(row, c)) cols.push_back(c);
  }
  return cols;
}

std::size_t AttentionMask::CountAllowed() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(),
                    [](std::uint8_t b) { return b != 0; }));
}

bool AttentionMask::AllOnes() const {
  return std::all_of(bits_.begin(), bits_.end(),
                     [](std::uint8_t b) { return b != 0; });
}

KeyFrameSet ExtractKeyFrames(std::span<const int> frame_ids, int blank_id) {
  KeyFrameSet set;
  set.num_frames = frame_ids.size();
  set.blank_id = blank_id;
  int prev = blank_id;
  for (std::size_t t = 0; t < frame_ids.size(); ++t) {
    const int id = frame_ids[t];
    if (id != blank_id && id != prev) set.positions.push_back(t);
    prev = id;
  }
  return set;
}

namespace {

// [lo, hi] window of key frame p clipped to the sequence.
std::pair<std::size_t, std::size_t> Window(std::size_t p, std::size_t w,
                                           std::size_t num_frames) {
  std::size_t lo = p >= w ? p - w : 0;
  std::size_t hi = std::min(num_frames - 1, p + w);
  return {lo, hi};
}

}  // namespace

std::vector<std::size_t> ActiveFrames(const KeyFrameSet& key_frames,
                                      std::size_t w) {
  std::vector<std::size_t> active;
  for (std::size_t p : key_frames.positions) {
    auto [lo, hi] = Window(p, w, key_frames.num_frames);
    if (!active.empty() && active.back() >= lo) lo = active.back() + 1;
    for (std::size_t t = lo; t <= hi; ++t) active.push_back(t);
  }
  return active;
}

AttentionMask BuildKfsaMask(const KeyFrameSet& key_frames, std::size_t w,
                            MaskMode mode, MaskSemantics semantics) {
  const std::size_t n = key_frames.num_frames;
  if (mode == MaskMode::kDense) return AttentionMask::Dense(n);

  AttentionMask mask(n, mode, w);
  const std::size_t width = mode == MaskMode::kKOnly ? 0 : w;
  const bool global = mode != MaskMode::kWindowOnly;
  const std::vector<std::size_t> active = ActiveFrames(key_frames, width);

  if (semantics == MaskSemantics::kLiteralRow) {
    for (std::size_t t1 : active) {
      for (std::size_t t2 = 0; t2 < n; ++t2) mask.set(t1, t2);
    }
    if (global) {
      for (std::size_t t1 = 0; t1 < n; ++t1) {
        for (std::size_t p : key_frames.positions) mask.set(t1, p);
      }
    }
    return mask;
  }

  for (std::size_t p : key_frames.positions) {
    auto [lo, hi] = Window(p, width, n);
    for (std::size_t t1 = lo; t1 <= hi; ++t1) {
      for (std::size_t t2 = lo; t2 <= hi; ++t2) mask.set(t1, t2);
    }
  }
  if (global) {
    for (std::size_t t1 : active) {
      for (std::size_t p : key_frames.positions) mask.set(t1, p);
    }
  }
  return mask;
}

FrameSelection SelectKfdsFrames(const KeyFrameSet& key_frames, std::size_t w) {
  FrameSelection sel;
  sel.num_frames = key_frames.num_frames;
  if (key_frames.empty()) {
    sel.kept.resize(sel.num_frames);
    for (std::size_t t = 0; t < sel.num_frames; ++t) sel.kept[t] = t;
    sel.fallback = true;
    sel.drop_ratio = 0.0;
    return sel;
  }
  sel.kept = ActiveFrames(key_frames, w);
  sel.drop_ratio = 1.0 - static_cast<double>(sel.kept.size()) /
                             static_cast<double>(sel.num_frames);
  return sel;
}

Feasibility CheckCtcFeasible(const FrameSelection& selection,
                             std::size_t label_len) {
  if (label_len == 0) return Feasibility::kOk;
  return selection.kept.size() >= 2 * label_len + 1
             ? Feasibility::kOk
             : Feasibility::kFallbackNeeded;
}

DropRatioStats ComputeDropRatioStats(
    std::span<const FrameSelection> selections) {
  if (selections.empty()) {
    throw std::invalid_argument("drop ratio stats of an empty selection list");
  }
  DropRatioStats stats;
  stats.min = selections.front().drop_ratio;
  stats.max = selections.front().drop_ratio;
  double sum = 0;
  for (const auto& s : selections) {
    sum += s.drop_ratio;
    stats.min = std::min(stats.min, s.drop_ratio);
    stats.max = std::max(stats.max, s.drop_ratio);
  }
  stats.mean = sum / static_cast<double>(selections.size());
  return stats;
}

}  // namespace kfc
