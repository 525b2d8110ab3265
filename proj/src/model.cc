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

#include "kfc/model.h"

#include <cmath>
#include <set>

#include "kfc/ctc.h"
#include "kfc/ops.h"

namespace kfc {

namespace {

constexpr double kWeightSumTol = 1e-9;

void CheckWeights(const ModelConfig& c) {
  if (std::abs(c.alpha0 + c.alpha1 - 1.0) > kWeightSumTol) {
    throw ConfigError("alpha0 + alpha1 must equal 1 (got " +
                      std::to_string(c.alpha0) + " + " +
                      std::to_string(c.alpha1) + ")");
  }
  if (std::abs(c.beta0 + c.beta1 - 1.0) > kWeightSumTol) {
    throw ConfigError("beta0 + beta1 must equal 1 (got " +
                      std::to_string(c.beta0) + " + " +
                      std::to_string(c.beta1) + ")");
  }
  for (double v : {c.alpha0, c.alpha1, c.beta0, c.beta1}) {
    if (v < 0) throw ConfigError("loss weights must be non-negative");
  }
}

FrameSelection IdentitySelection(std::size_t num_frames) {
  FrameSelection sel;
  sel.num_frames = num_frames;
  sel.kept.resize(num_frames);
  for (std::size_t t = 0; t < num_frames; ++t) sel.kept[t] = t;
  return sel;
}

std::string_view ToString(MaskSemantics s) {
  return s == MaskSemantics::kSharedWindow ? "shared_window" : "literal_row";
}

MaskSemantics ParseMaskSemantics(std::string_view name) {
  if (name == "shared_window") return MaskSemantics::kSharedWindow;
  if (name == "literal_row") return MaskSemantics::kLiteralRow;
  throw ConfigError("unknown mask_semantics '" + std::string(name) +
                    "' (expected shared_window or literal_row)");
}

}  // namespace

std::string_view ToString(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::kDense:
      return "dense";
    case EncoderMode::kKfsa:
      return "kfsa";
    case EncoderMode::kKfds:
      return "kfds";
  }
  return "unknown";
}

EncoderMode ParseEncoderMode(std::string_view name) {
  if (name == "dense") return EncoderMode::kDense;
  if (name == "kfsa") return EncoderMode::kKfsa;
  if (name == "kfds") return EncoderMode::kKfds;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected dense, kfsa or kfds)");
}

void ModelConfig::Validate() const {
  if (feat_dim == 0) throw ConfigError("feat_dim must be >= 1");
  if (d_model == 0 || num_heads == 0 || d_model % num_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of num_heads");
  }
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be >= 1");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (enc1_blocks < 1) {
    throw ConfigError("enc1_blocks must be >= 1 (the intermediate CTC head "
                      "needs a first encoder)");
  }
  if (enc2_blocks < 1) throw ConfigError("enc2_blocks must be >= 1");
  if (subsample_factor != 1 && subsample_factor != 2 && subsample_factor != 4) {
    throw ConfigError("subsample_factor must be 1, 2 or 4");
  }
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (kfsa_mode == MaskMode::kDense) {
    throw ConfigError("kfsa_mode must be window_plus_k, k_only or window_only");
  }
  CheckWeights(*this);
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(grad_clip > 0)) throw ConfigError("grad_clip must be > 0");
}

nlohmann::json ToJson(const ModelConfig& c) {
  return {
      {"feat_dim", c.feat_dim},
      {"d_model", c.d_model},
      {"num_heads", c.num_heads},
      {"ffn_dim", c.ffn_dim},
      {"conv_kernel", c.conv_kernel},
      {"enc1_blocks", c.enc1_blocks},
      {"enc2_blocks", c.enc2_blocks},
      {"subsample_factor", c.subsample_factor},
      {"vocab_size", c.vocab_size},
      {"mode", ToString(c.mode)},
      {"w", c.w},
      {"kfsa_mode", ToString(c.kfsa_mode)},
      {"mask_semantics", ToString(c.mask_semantics)},
      {"alpha0", c.alpha0},
      {"alpha1", c.alpha1},
      {"beta0", c.beta0},
      {"beta1", c.beta1},
      {"warmup_epochs", c.warmup_epochs},
      {"lr", c.lr},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"grad_clip", c.grad_clip},
      {"seed", c.seed},
  };
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  const std::set<std::string> known = [] {
    std::set<std::string> keys;
    const nlohmann::json defaults = ToJson(ModelConfig{});
    for (const auto& [k, v] : defaults.items()) keys.insert(k);
    return keys;
  }();
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in model config");
  }
  ModelConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("feat_dim", c.feat_dim);
    get("d_model", c.d_model);
    get("num_heads", c.num_heads);
    get("ffn_dim", c.ffn_dim);
    get("conv_kernel", c.conv_kernel);
    get("enc1_blocks", c.enc1_blocks);
    get("enc2_blocks", c.enc2_blocks);
    get("subsample_factor", c.subsample_factor);
    get("vocab_size", c.vocab_size);
    if (j.contains("mode")) c.mode = ParseEncoderMode(j.at("mode").get<std::string>());
    get("w", c.w);
    if (j.contains("kfsa_mode")) {
      c.kfsa_mode = ParseMaskMode(j.at("kfsa_mode").get<std::string>());
    }
    if (j.contains("mask_semantics")) {
      c.mask_semantics =
          ParseMaskSemantics(j.at("mask_semantics").get<std::string>());
    }
    get("alpha0", c.alpha0);
    get("alpha1", c.alpha1);
    get("beta0", c.beta0);
    get("beta1", c.beta1);
    get("warmup_epochs", c.warmup_epochs);
    get("lr", c.lr);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("grad_clip", c.grad_clip);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.Validate();
  Rng rng(config_.seed);
  frontend_ = FrontendParams::Init(config_.feat_dim, config_.d_model,
                                   config_.subsample_factor, rng);
  for (std::size_t i = 0; i < config_.enc1_blocks; ++i) {
    enc1_.push_back(ConformerBlockParams::Init(config_.d_model,
                                               config_.num_heads,
                                               config_.ffn_dim,
                                               config_.conv_kernel, rng));
  }
  ctc1_w_ = XavierUniform(config_.d_model, config_.vocab_size, rng);
  ctc1_b_ = Tensor::Zeros({config_.vocab_size}, true);
  for (std::size_t i = 0; i < config_.enc2_blocks; ++i) {
    enc2_.push_back(ConformerBlockParams::Init(config_.d_model,
                                               config_.num_heads,
                                               config_.ffn_dim,
                                               config_.conv_kernel, rng));
  }
  ctc2_w_ = XavierUniform(config_.d_model, config_.vocab_size, rng);
  ctc2_b_ = Tensor::Zeros({config_.vocab_size}, true);
}

void Model::SetKeyFrameMode(EncoderMode mode, std::size_t w,
                            MaskMode kfsa_mode) {
  ModelConfig next = config_;
  next.mode = mode;
  next.w = w;
  next.kfsa_mode = kfsa_mode;
  next.Validate();
  config_ = next;
}

ForwardOutput Model::Forward(const Tensor& features,
                             std::optional<std::size_t> label_len,
                             bool key_frames_enabled) const {
  if (features.rank() != 2 || features.cols() != config_.feat_dim) {
    throw DimensionError("model: expected T x " +
                         std::to_string(config_.feat_dim) +
                         " features, got " + ShapeToString(features.shape()));
  }
  ForwardOutput out;
  Tensor h = SubsampleFrontend(features, frontend_);
  const std::size_t num_frames = h.rows();
  h = Add(h, PositionalEncoding(num_frames, config_.d_model));
  for (const auto& block : enc1_) h = ConformerBlock(h, nullptr, block);
  out.interctc_logprobs = LogSoftmax(Linear(h, ctc1_w_, &ctc1_b_));
  out.selection = IdentitySelection(num_frames);

  const AttentionMask* mask = nullptr;
  if (key_frames_enabled && config_.mode != EncoderMode::kDense) {
    out.key_frames =
        ExtractKeyFrames(ArgmaxFrameLabels(out.interctc_logprobs));
    if (config_.mode == EncoderMode::kKfsa) {
      if (out.key_frames.empty()) {
        out.fallback = true;
      } else {
        out.mask_used = BuildKfsaMask(out.key_frames, config_.w,
                                      config_.kfsa_mode,
                                      config_.mask_semantics);
        mask = &*out.mask_used;
      }
    } else {
      FrameSelection sel = SelectKfdsFrames(out.key_frames, config_.w);
      if (sel.fallback) {
        out.fallback = true;
        out.selection.fallback = true;
      } else if (label_len && CheckCtcFeasible(sel, *label_len) ==
                                  Feasibility::kFallbackNeeded) {
        out.fallback = true;
        out.selection.fallback = true;
      } else {
        h = GatherRows(h, sel.kept);
        out.selection = std::move(sel);
      }
    }
  }

  for (const auto& block : enc2_) {
    const std::uint64_t before = AttentionMultiplies();
    h = ConformerBlock(h, mask, block);
    out.enc2_attention_mults.push_back(AttentionMultiplies() - before);
  }
  out.final_logprobs = LogSoftmax(Linear(h, ctc2_w_, &ctc2_b_));
  return out;
}

std::vector<NamedParam> Model::Parameters() const {
  std::vector<NamedParam> params;
  frontend_.Collect("frontend", &params);
  for (std::size_t i = 0; i < enc1_.size(); ++i) {
    enc1_[i].Collect("enc1." + std::to_string(i), &params);
  }
  params.push_back({"ctc1.w", ctc1_w_});
  params.push_back({"ctc1.b", ctc1_b_});
  for (std::size_t i = 0; i < enc2_.size(); ++i) {
    enc2_[i].Collect("enc2." + std::to_string(i), &params);
  }
  params.push_back({"ctc2.w", ctc2_w_});
  params.push_back({"ctc2.b", ctc2_b_});
  return params;
}

std::size_t Model::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& p : Parameters()) n += p.tensor.numel();
  return n;
}

Tensor JointLoss(const Tensor& l_ctc1, const Tensor& l_ctc2,
                 const Tensor* l_ce, const ModelConfig& config) {
  CheckWeights(config);
  Tensor ctc = Add(Scale(l_ctc1, config.alpha0), Scale(l_ctc2, config.alpha1));
  Tensor loss = Scale(ctc, config.beta0);
  if (l_ce) loss = Add(loss, Scale(*l_ce, config.beta1));
  return loss;
}

}  // namespace kfc
