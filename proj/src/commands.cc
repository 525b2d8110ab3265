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

#include "kfc/commands.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "kfc/checkpoint.h"
#include "kfc/nn.h"
#include "kfc/train.h"

namespace kfc {

namespace fs = std::filesystem;

namespace {

void RejectUnknown(const nlohmann::json& j, const nlohmann::json& defaults,
                   const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) {
      throw ConfigError("unknown key '" + k + "' in " + where);
    }
  }
}

template <typename T>
void Get(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

nlohmann::json ToJson(const SyntheticTaskSpec& s) {
  return {
      {"vocab_size", s.vocab_size},
      {"feat_dim", s.feat_dim},
      {"pattern_len", s.pattern_len},
      {"gap_min", s.gap_min},
      {"gap_max", s.gap_max},
      {"label_min", s.label_min},
      {"label_max", s.label_max},
      {"noise_sigma", s.noise_sigma},
      {"num_utterances", s.num_utterances},
      {"seed", s.seed},
  };
}

SyntheticTaskSpec TaskSpecFromJson(const nlohmann::json& j) {
  RejectUnknown(j, ToJson(SyntheticTaskSpec{}), "task config");
  SyntheticTaskSpec s;
  try {
    Get(j, "vocab_size", s.vocab_size);
    Get(j, "feat_dim", s.feat_dim);
    Get(j, "pattern_len", s.pattern_len);
    Get(j, "gap_min", s.gap_min);
    Get(j, "gap_max", s.gap_max);
    Get(j, "label_min", s.label_min);
    Get(j, "label_max", s.label_max);
    Get(j, "noise_sigma", s.noise_sigma);
    Get(j, "num_utterances", s.num_utterances);
    Get(j, "seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task config: ") + e.what());
  }
  return s;
}

void RunConfig::Validate() const {
  model.Validate();
  try {
    task.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(train_fraction > 0 && train_fraction < 1)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (data_path.empty()) {
    if (model.feat_dim != task.feat_dim) {
      throw ConfigError("model.feat_dim must equal task.feat_dim");
    }
    if (model.vocab_size != task.vocab_size) {
      throw ConfigError("model.vocab_size must equal task.vocab_size");
    }
  }
}

nlohmann::json ToJson(const RunConfig& c) {
  return {
      {"model", ToJson(c.model)},
      {"task", ToJson(c.task)},
      {"train_fraction", c.train_fraction},
      {"data_path", c.data_path},
  };
}

RunConfig RunConfigFromJson(const nlohmann::json& j) {
  RejectUnknown(j, ToJson(RunConfig{}), "run config");
  RunConfig c;
  if (j.contains("model")) c.model = ModelConfigFromJson(j.at("model"));
  if (j.contains("task")) c.task = TaskSpecFromJson(j.at("task"));
  try {
    Get(j, "train_fraction", c.train_fraction);
    Get(j, "data_path", c.data_path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return RunConfigFromJson(j);
}

int CmdTrain(const TrainArgs& args, std::ostream& log) {
  RunConfig config;
  try {
    config = LoadRunConfig(args.config_path);
    if (args.seed) config.model.seed = *args.seed;
    config.Validate();
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    fs::create_directories(args.out_dir);
    Dataset all = config.data_path.empty() ? GenerateSynthetic(config.task)
                                           : LoadDataset(config.data_path,
                                                         config.model.feat_dim);
    auto [train, heldout] =
        SplitDataset(all, config.train_fraction, config.task.seed);
    SaveDataset(train, (fs::path(args.out_dir) / "train.kfc").string());
    SaveDataset(heldout, (fs::path(args.out_dir) / "heldout.kfc").string());
    log << "train " << train.size() << " utts, heldout " << heldout.size()
        << " utts\n";

    TrainState state(config.model);
    log << "model parameters: " << state.model.ParameterCount() << "\n";
    std::ofstream metrics(fs::path(args.out_dir) / "metrics.csv");
    metrics << kMetricsCsvHeader << "\n";
    for (std::size_t epoch = 0; epoch < config.model.epochs; ++epoch) {
      EpochMetrics tm = TrainEpoch(state, train, epoch);
      EpochMetrics hm = Evaluate(state.model, heldout,
                                 epoch >= config.model.warmup_epochs,
                                 ThreadsFromEnv());
      hm.epoch = epoch;
      metrics << MetricsCsvRow(tm) << "\n" << MetricsCsvRow(hm) << "\n";
      metrics.flush();
      log << "epoch " << epoch << " train_loss " << Format("%.4f", tm.loss_joint)
          << " heldout_ter " << Format("%.4f", hm.ter) << " drop "
          << Format("%.3f", hm.drop_ratio_mean) << " fallback "
          << hm.fallback_count << "\n";
    }
    SaveCheckpoint(state.model, args.out_dir, /*write_config=*/false);
    std::ofstream(fs::path(args.out_dir) / kConfigFile)
        << ToJson(config).dump(2) << "\n";
  } catch (const NumericError& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

namespace {

// Loads the checkpoint and dataset and applies mode overrides.
struct Loaded {
  Model model;
  Dataset data;
};

Loaded LoadForEval(const std::string& ckpt_dir, const std::string& data_path,
                   const std::optional<std::string>& mode,
                   const std::optional<std::size_t>& w,
                   const std::optional<std::string>& kfsa_mode,
                   std::ostream& log) {
  Model model = LoadCheckpoint(ckpt_dir);
  Dataset data = LoadDataset(data_path, model.config().feat_dim);
  const ModelConfig& trained = model.config();
  const EncoderMode next_mode = mode ? ParseEncoderMode(*mode) : trained.mode;
  const std::size_t next_w = w ? *w : trained.w;
  const MaskMode next_kfsa =
      kfsa_mode ? ParseMaskMode(*kfsa_mode) : trained.kfsa_mode;
  if (next_mode != trained.mode || next_w != trained.w ||
      next_kfsa != trained.kfsa_mode) {
    log << "warning: evaluating with mode=" << ToString(next_mode)
        << " w=" << next_w << " kfsa_mode=" << ToString(next_kfsa)
        << " (trained with mode=" << ToString(trained.mode)
        << " w=" << trained.w << " kfsa_mode=" << ToString(trained.kfsa_mode)
        << ")\n";
  }
  model.SetKeyFrameMode(next_mode, next_w, next_kfsa);
  return {std::move(model), std::move(data)};
}

}  // namespace

int CmdEval(const EvalArgs& args, std::ostream& out, std::ostream& log) {
  std::optional<Loaded> loaded;
  try {
    loaded.emplace(LoadForEval(args.ckpt_dir, args.data_path, args.mode,
                               args.w, args.kfsa_mode, log));
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  try {
    const EpochMetrics m =
        Evaluate(loaded->model, loaded->data, true, args.threads);
    nlohmann::json j = {
        {"ter", m.ter},
        {"drop_ratio_mean", m.drop_ratio_mean},
        {"fallback_count", m.fallback_count},
        {"t_prime_mean", m.t_prime_mean},
    };
    out << j.dump() << "\n";
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int CmdAnalyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& log) {
  std::optional<Loaded> loaded;
  try {
    loaded.emplace(LoadForEval(args.ckpt_dir, args.data_path, args.mode,
                               args.w, std::nullopt, log));
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  try {
    const ModelConfig& cfg = loaded->model.config();
    const auto reports =
        AnalyzeUtterances(loaded->model, loaded->data, args.threads);
    std::ofstream file;
    std::ostream* sink = &out;
    if (!args.emit_path.empty() && args.emit_path != "-") {
      file.open(args.emit_path);
      if (!file) throw std::runtime_error("cannot write " + args.emit_path);
      sink = &file;
    }
    const std::string mode(ToString(cfg.mode));
    *sink << kAnalyzeCsvHeader << "\n";
    double t = 0, u = 0, p = 0, kept = 0, drop = 0;
    std::size_t fallbacks = 0;
    for (const auto& r : reports) {
      *sink << r.id << "," << r.num_frames << "," << r.label_len << ","
            << r.num_key_frames << "," << cfg.w << "," << mode << ","
            << r.num_kept << "," << Format("%.6f", r.drop_ratio) << ","
            << (r.fallback ? 1 : 0) << "\n";
      t += static_cast<double>(r.num_frames);
      u += static_cast<double>(r.label_len);
      p += static_cast<double>(r.num_key_frames);
      kept += static_cast<double>(r.num_kept);
      drop += r.drop_ratio;
      fallbacks += r.fallback ? 1 : 0;
    }
    const double n = std::max<double>(1.0, static_cast<double>(reports.size()));
    *sink << "summary," << Format("%.4f", t / n) << "," << Format("%.4f", u / n)
          << "," << Format("%.4f", p / n) << "," << cfg.w << "," << mode << ","
          << Format("%.4f", kept / n) << "," << Format("%.6f", drop / n) << ","
          << fallbacks << "\n";
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

BenchResult RunBench(const BenchArgs& args) {
  if (!(args.keep_fraction > 0 && args.keep_fraction <= 1)) {
    throw std::invalid_argument("keep-fraction must lie in (0, 1]");
  }
  if (args.num_frames == 0 || args.repeat == 0) {
    throw std::invalid_argument("T and repeat must be >= 1");
  }
  if (args.heads == 0 || args.d_model % args.heads != 0) {
    throw std::invalid_argument("d must be a positive multiple of heads");
  }
  const auto kept = static_cast<std::size_t>(std::ceil(
      args.keep_fraction * static_cast<double>(args.num_frames) - 1e-9));

  Rng rng(args.seed);
  AttentionParams params = AttentionParams::Init(args.d_model, args.heads, rng);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> values(args.num_frames * args.d_model);
  for (double& v : values) v = unit(rng);
  const Tensor x = Tensor::FromData({args.num_frames, args.d_model}, values);
  values.resize(kept * args.d_model);
  const Tensor x_kept = Tensor::FromData({kept, args.d_model}, values);

  NoGradGuard no_grad;
  auto measure = [&](const Tensor& input, std::uint64_t* mults) {
    std::vector<double> ms;
    for (std::size_t r = 0; r < args.repeat; ++r) {
      ResetAttentionMultiplies();
      const auto start = std::chrono::steady_clock::now();
      Tensor y = MultiHeadAttention(input, nullptr, params);
      const auto stop = std::chrono::steady_clock::now();
      *mults = AttentionMultiplies();
      ms.push_back(
          std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::sort(ms.begin(), ms.end());
    return ms[ms.size() / 2];
  };
  BenchResult result;
  result.dense_ms = measure(x, &result.dense_mults);
  result.sparse_ms = measure(x_kept, &result.sparse_mults);
  result.ratio = static_cast<double>(result.sparse_mults) /
                 static_cast<double>(result.dense_mults);
  return result;
}

nlohmann::json ToJson(const BenchResult& r) {
  return {
      {"dense_mults", r.dense_mults},
      {"sparse_mults", r.sparse_mults},
      {"ratio", r.ratio},
      {"dense_ms", r.dense_ms},
      {"sparse_ms", r.sparse_ms},
  };
}

int CmdBench(const BenchArgs& args, std::ostream& out, std::ostream& log) {
  try {
    out << ToJson(RunBench(args)).dump() << "\n";
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace kfc
