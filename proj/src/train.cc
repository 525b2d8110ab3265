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

#include "kfc/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "kfc/ctc.h"
#include "kfc/ops.h"

namespace kfc {

Adam::Adam(std::vector<NamedParam> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::ZeroGrad() {
  for (auto& p : params_) p.tensor.ZeroGrad();
}

double Adam::Step() {
  double sq = 0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = options_.clip_norm > 0 && norm > options_.clip_norm
                          ? options_.clip_norm / norm
                          : 1.0;
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto data = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad[k] * clip;
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
      const double update =
          options_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + options_.eps);
      double next = data[k] - update;
      if (options_.round_to_float) next = static_cast<float>(next);
      data[k] = next;
    }
  }
  return norm;
}

std::string MetricsCsvRow(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%zu",
                m.epoch, m.split.c_str(), m.loss_ctc1, m.loss_ctc2,
                m.loss_joint, m.ter, m.drop_ratio_mean, m.fallback_count);
  return buf;
}

TrainState::TrainState(const ModelConfig& config)
    : model(config),
      optimizer(model.Parameters(),
                AdamOptions{.lr = config.lr, .clip_norm = config.grad_clip}),
      rng(config.seed ^ 0x9e3779b97f4a7c15ull) {}

namespace {

struct UtteranceResult {
  double loss_ctc1 = 0;
  double loss_ctc2 = 0;
  double loss_joint = 0;
  bool ctc1_feasible = true;
  bool ctc2_feasible = true;
  std::size_t errors = 0;
  std::size_t ref_len = 0;
  std::size_t num_frames = 0;
  std::size_t num_kept = 0;
  std::size_t num_key_frames = 0;
  double drop_ratio = 0;
  bool fallback = false;
};

struct Losses {
  Tensor joint;
  CtcResult ctc1, ctc2;
};

Losses ComputeLosses(const ForwardOutput& out, const LabelSeq& labels,
                     const ModelConfig& config) {
  Losses l;
  l.ctc1 = CtcLoss(out.interctc_logprobs, labels);
  l.ctc2 = CtcLoss(out.final_logprobs, labels);
  // An infeasible head contributes nothing.
  Tensor a = l.ctc1.feasible ? l.ctc1.loss : Tensor::Scalar(0.0);
  Tensor b = l.ctc2.feasible ? l.ctc2.loss : Tensor::Scalar(0.0);
  l.joint = JointLoss(a, b, nullptr, config);
  return l;
}

UtteranceResult Summarize(const ForwardOutput& out, const Losses& l,
                          const LabelSeq& labels) {
  UtteranceResult r;
  r.ctc1_feasible = l.ctc1.feasible;
  r.ctc2_feasible = l.ctc2.feasible;
  r.loss_ctc1 = l.ctc1.feasible ? l.ctc1.value() : 0.0;
  r.loss_ctc2 = l.ctc2.feasible ? l.ctc2.value() : 0.0;
  r.loss_joint = l.joint.item();
  const LabelSeq hyp = CtcGreedyDecode(out.final_logprobs);
  r.errors = EditDistance(hyp, labels).errors();
  r.ref_len = labels.size();
  r.num_frames = out.interctc_logprobs.rows();
  r.num_kept = out.final_logprobs.rows();
  r.num_key_frames = out.key_frames.size();
  r.drop_ratio = out.selection.drop_ratio;
  r.fallback = out.fallback;
  return r;
}

EpochMetrics Aggregate(const std::vector<UtteranceResult>& results) {
  EpochMetrics m;
  std::size_t errors = 0, ref = 0, n1 = 0, n2 = 0;
  double frames = 0, kept = 0;
  for (const auto& r : results) {
    if (r.ctc1_feasible) {
      m.loss_ctc1 += r.loss_ctc1;
      ++n1;
    }
    if (r.ctc2_feasible) {
      m.loss_ctc2 += r.loss_ctc2;
      ++n2;
    }
    m.loss_joint += r.loss_joint;
    errors += r.errors;
    ref += r.ref_len;
    m.drop_ratio_mean += r.drop_ratio;
    m.fallback_count += r.fallback ? 1 : 0;
    frames += static_cast<double>(r.num_frames);
    kept += static_cast<double>(r.num_kept);
  }
  const double n = std::max<double>(1.0, static_cast<double>(results.size()));
  m.loss_ctc1 /= std::max<std::size_t>(1, n1);
  m.loss_ctc2 /= std::max<std::size_t>(1, n2);
  m.loss_joint /= n;
  m.ter = static_cast<double>(errors) /
          static_cast<double>(std::max<std::size_t>(1, ref));
  m.drop_ratio_mean /= n;
  m.t_mean = frames / n;
  m.t_prime_mean = kept / n;
  return m;
}

template <typename Fn>
void ParallelFor(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<UtteranceResult> EvaluateAll(const Model& model,
                                         const Dataset& data, bool enabled,
                                         std::size_t threads) {
  std::vector<UtteranceResult> results(data.size());
  ParallelFor(data.size(), threads, [&](std::size_t i) {
    NoGradGuard no_grad;
    const auto& u = data.utterances[i];
    ForwardOutput out =
        model.Forward(u.FeatureTensor(data.feat_dim), std::nullopt, enabled);
    results[i] = Summarize(out, ComputeLosses(out, u.labels, model.config()),
                           u.labels);
  });
  return results;
}

}  // namespace

EpochMetrics TrainEpoch(TrainState& state, const Dataset& train,
                        std::size_t epoch_index) {
  const ModelConfig& config = state.model.config();
  const bool enabled = epoch_index >= config.warmup_epochs;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state.rng);

  std::vector<UtteranceResult> results;
  results.reserve(train.size());
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const double inv_batch = 1.0 / static_cast<double>(end - start);
    state.optimizer.ZeroGrad();
    for (std::size_t i = start; i < end; ++i) {
      const auto& u = train.utterances[order[i]];
      ForwardOutput out = state.model.Forward(u.FeatureTensor(train.feat_dim),
                                              u.labels.size(), enabled);
      Losses losses = ComputeLosses(out, u.labels, config);
      if (!std::isfinite(losses.joint.item())) {
        throw NumericError("non-finite loss at epoch " +
                           std::to_string(epoch_index) + ", utterance " + u.id);
      }
      if (losses.joint.requires_grad()) {
        Scale(losses.joint, inv_batch).Backward();
      }
      results.push_back(Summarize(out, losses, u.labels));
    }
    state.optimizer.Step();
  }
  EpochMetrics m = Aggregate(results);
  m.epoch = epoch_index;
  m.split = "train";
  return m;
}

EpochMetrics Evaluate(const Model& model, const Dataset& data,
                      bool key_frames_enabled, std::size_t threads) {
  EpochMetrics m = Aggregate(EvaluateAll(model, data, key_frames_enabled,
                                         threads));
  m.split = "heldout";
  return m;
}

std::vector<UtteranceReport> AnalyzeUtterances(const Model& model,
                                               const Dataset& data,
                                               std::size_t threads) {
  const auto results = EvaluateAll(model, data, true, threads);
  std::vector<UtteranceReport> reports;
  reports.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    reports.push_back({data.utterances[i].id, r.num_frames, r.ref_len,
                       r.num_key_frames, r.num_kept, r.drop_ratio, r.fallback,
                       r.errors});
  }
  return reports;
}

std::size_t ThreadsFromEnv() {
  const char* v = std::getenv("KFC_THREADS");
  if (!v) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n > 0 ? static_cast<std::size_t>(n) : 1;
}

}  // namespace kfc
