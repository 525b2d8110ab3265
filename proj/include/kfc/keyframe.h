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

// Key-frame guidance derived from intermediate CTC labels.
//
// A key frame is a frame whose argmax label is not blank; within a run of
// identical consecutive non-blank labels only the first frame is kept. Key
// frames drive two mechanisms in the second encoder:
//
//   * KFSA: an attention mask. Frames within `w` of a key frame (the active
//     set) may attend to frames sharing a window with them (local term) and
//     to every key frame (global term). Rows outside the active set are
//     empty and yield zero attention output.
//   * KFDS: frame dropping. Only the union of [p - w, p + w] windows is kept,
//     so the second encoder sees at most (2w + 1) * |P| frames.

#ifndef KFC_KEYFRAME_H_
#define KFC_KEYFRAME_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kfc {

inline constexpr int kBlankId = 0;

struct KeyFrameSet {
  std::vector<std::size_t> positions;  // strictly increasing
  std::size_t num_frames = 0;
  int blank_id = kBlankId;

  bool empty() const { return positions.empty(); }
  std::size_t size() const { return positions.size(); }
};

enum class MaskMode { kWindowPlusK, kKOnly, kWindowOnly, kDense };

std::string_view ToString(MaskMode mode);
// Accepts "window_plus_k", "k_only", "window_only", "dense".
MaskMode ParseMaskMode(std::string_view name);

// How the local term is read. kSharedWindow: (t1, t2) share the window of a
// common key frame. kLiteralRow: every column of an active row is open, i.e.
// M[t1][t2] = 1 iff t1 is within w of some key frame or t2 is a key frame.
enum class MaskSemantics { kSharedWindow, kLiteralRow };

class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t num_frames, MaskMode mode, std::size_t w);

  static AttentionMask Dense(std::size_t num_frames);

  std::size_t size() const { return num_frames_; }
  MaskMode mode() const { return mode_; }
  std::size_t w() const { return w_; }

  bool allowed(std::size_t row, std::size_t col) const {
    return bits_[row * num_frames_ + col] != 0;
  }
  void set(std::size_t row, std::size_t col, bool value = true) {
    bits_[row * num_frames_ + col] = value ? 1 : 0;
  }

  bool RowActive(std::size_t row) const;
  std::vector<std::size_t> RowColumns(std::size_t row) const;
  std::size_t CountAllowed() const;
  bool AllOnes() const;

 private:
  std::size_t num_frames_ = 0;
  MaskMode mode_ = MaskMode::kDense;
  std::size_t w_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct FrameSelection {
  std::vector<std::size_t> kept;  // strictly increasing
  std::size_t num_frames = 0;
  double drop_ratio = 0.0;  // 1 - |kept| / num_frames
  bool fallback = false;    // no key frames; identity selection
};

// `frame_ids` are per-frame argmax labels.
KeyFrameSet ExtractKeyFrames(std::span<const int> frame_ids,
                             int blank_id = kBlankId);

// Frames within w of some key frame.
std::vector<std::size_t> ActiveFrames(const KeyFrameSet& key_frames,
                                      std::size_t w);

// Empty key-frame sets give an all-zero mask except in kDense mode.
AttentionMask BuildKfsaMask(
    const KeyFrameSet& key_frames, std::size_t w, MaskMode mode,
    MaskSemantics semantics = MaskSemantics::kSharedWindow);

// Empty key-frame sets give the identity selection with `fallback` set.
FrameSelection SelectKfdsFrames(const KeyFrameSet& key_frames, std::size_t w);

enum class Feasibility { kOk, kFallbackNeeded };

// A CTC head needs at least 2U + 1 frames for a U-token reference.
Feasibility CheckCtcFeasible(const FrameSelection& selection,
                             std::size_t label_len);

struct DropRatioStats {
  double mean = 0;
  double min = 0;
  double max = 0;
};

// Throws std::invalid_argument on an empty list.
DropRatioStats ComputeDropRatioStats(std::span<const FrameSelection> selections);

}  // namespace kfc

#endif  // KFC_KEYFRAME_H_
