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

#include "kfc/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "kfc/ops.h"

namespace kfc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

void ValidateLabels(std::span<const int> labels, std::size_t vocab_size,
                    int blank_id) {
  for (int id : labels) {
    if (id == blank_id || id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw std::invalid_argument("label id " + std::to_string(id) +
                                  " is blank or outside vocab of " +
                                  std::to_string(vocab_size));
    }
  }
}

std::size_t MinCtcFrames(std::span<const int> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

CtcResult CtcLoss(const Tensor& log_probs, std::span<const int> labels,
                  int blank_id) {
  if (log_probs.rank() != 2) {
    throw DimensionError("ctc_loss: expected T x V log-probs, got " +
                         ShapeToString(log_probs.shape()));
  }
  const std::size_t t_len = log_probs.rows(), vocab = log_probs.cols();
  ValidateLabels(labels, vocab, blank_id);

  if (MinCtcFrames(labels) > t_len) {
    Tensor loss = internal::MakeResultUnchecked(
        {1}, {std::numeric_limits<double>::infinity()}, {log_probs},
        [](const internal::Node&) {});
    return {loss, false};
  }

  // Extended sequence: blank, l1, blank, l2, ..., blank.
  const std::size_t s_len = 2 * labels.size() + 1;
  std::vector<int> ext(s_len, blank_id);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto skip_allowed = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank_id && ext[s] != ext[s - 2];
  };

  const auto& lp = log_probs.node()->data;
  auto y = [&](std::size_t t, std::size_t s) {
    return lp[t * vocab + static_cast<std::size_t>(ext[s])];
  };

  std::vector<double> alpha(t_len * s_len, kNegInf);
  alpha[0] = y(0, 0);
  if (s_len > 1) alpha[1] = y(0, 1);
  for (std::size_t t = 1; t < t_len; ++t) {
    const double* prev = alpha.data() + (t - 1) * s_len;
    double* cur = alpha.data() + t * s_len;
    for (std::size_t s = 0; s < s_len; ++s) {
      double a = prev[s];
      if (s >= 1) a = LogAdd(a, prev[s - 1]);
      if (skip_allowed(s)) a = LogAdd(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + y(t, s);
    }
  }

  // beta[t][s] excludes the emission at t.
  std::vector<double> beta(t_len * s_len, kNegInf);
  beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
  if (s_len > 1) beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
  for (std::size_t t = t_len - 1; t-- > 0;) {
    const double* next = beta.data() + (t + 1) * s_len;
    double* cur = beta.data() + t * s_len;
    for (std::size_t s = 0; s < s_len; ++s) {
      double b = next[s] == kNegInf ? kNegInf : next[s] + y(t + 1, s);
      if (s + 1 < s_len && next[s + 1] != kNegInf) {
        b = LogAdd(b, next[s + 1] + y(t + 1, s + 1));
      }
      if (s + 2 < s_len && skip_allowed(s + 2) && next[s + 2] != kNegInf) {
        b = LogAdd(b, next[s + 2] + y(t + 1, s + 2));
      }
      cur[s] = b;
    }
  }

  const double* last = alpha.data() + (t_len - 1) * s_len;
  double log_p = last[s_len - 1];
  if (s_len > 1) log_p = LogAdd(log_p, last[s_len - 2]);

  // d(-log P)/d log_probs[t][k] = -sum over s with ext[s] == k of occupancy.
  std::vector<double> grad(t_len * vocab, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      const double a = alpha[t * s_len + s];
      const double b = beta[t * s_len + s];
      if (a == kNegInf || b == kNegInf) continue;
      grad[t * vocab + static_cast<std::size_t>(ext[s])] -=
          std::exp(a + b - log_p);
    }
  }

  auto lpn = log_probs.node();
  Tensor loss = internal::MakeResult(
      "ctc_loss", {1}, {-log_p}, {log_probs},
      [lpn, grad = std::move(grad)](const internal::Node& o) {
        auto& g = lpn->GradBuffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * grad[i];
      });
  return {loss, true};
}

std::vector<int> ArgmaxFrameLabels(const Tensor& log_probs) {
  const std::size_t t_len = log_probs.rows(), vocab = log_probs.cols();
  const auto data = log_probs.data();
  std::vector<int> ids(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < vocab; ++k) {
      if (data[t * vocab + k] > data[t * vocab + best]) best = k;
    }
    ids[t] = static_cast<int>(best);
  }
  return ids;
}

LabelSeq CollapseFrameLabels(std::span<const int> frame_ids, int blank_id) {
  LabelSeq out;
  int prev = blank_id;
  for (int id : frame_ids) {
    if (id != blank_id && id != prev) out.push_back(id);
    prev = id;
  }
  return out;
}

LabelSeq CtcGreedyDecode(const Tensor& log_probs, int blank_id) {
  return CollapseFrameLabels(ArgmaxFrameLabels(log_probs), blank_id);
}

EditStats EditDistance(std::span<const int> hyp, std::span<const int> ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  // cost[i][j]: hyp[:i] vs ref[:j].
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return cost[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (hyp[i - 1] != ref[j - 1]);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditStats stats;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (hyp[i - 1] != ref[j - 1])) {
      if (hyp[i - 1] != ref[j - 1]) ++stats.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++stats.deletions;
      --j;
    } else {
      ++stats.insertions;
      --i;
    }
  }
  stats.rate = static_cast<double>(stats.errors()) /
               static_cast<double>(std::max<std::size_t>(1, m));
  return stats;
}

}  // namespace kfc
