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

#include "kfc/data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace kfc {

namespace {

constexpr char kMagic[4] = {'K', 'F', 'C', '1'};

std::string UtteranceId(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt%05zu", index);
  return buf;
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t U32(const char* what) {
    if (remaining() < 4) {
      throw DatasetFormatError(std::string("truncated dataset: missing ") + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++]))
           << (8 * i);
    }
    return v;
  }

  float F32() { return std::bit_cast<float>(U32("feature value")); }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void SyntheticTaskSpec::Validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("synthetic task: " + msg);
  };
  if (vocab_size < 3) fail("vocab_size must be >= 3");
  if (feat_dim == 0) fail("feat_dim must be >= 1");
  if (pattern_len == 0) fail("pattern_len must be >= 1");
  if (gap_min < 1) fail("gap_min must be >= 1");
  if (gap_max < gap_min) fail("gap_max must be >= gap_min");
  if (label_min < 1) fail("label_min must be >= 1");
  if (label_max < label_min) fail("label_max must be >= label_min");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be >= 0");
}

Tensor Utterance::FeatureTensor(std::size_t feat_dim) const {
  return Tensor::FromData({num_frames, feat_dim},
                          std::vector<double>(features.begin(), features.end()));
}

Dataset GenerateSynthetic(const SyntheticTaskSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const std::size_t f = spec.feat_dim;

  // prototypes[k - 1] renders token k.
  std::vector<std::vector<float>> prototypes(spec.vocab_size - 1);
  for (auto& proto : prototypes) {
    proto.resize(spec.pattern_len * f);
    for (float& v : proto) v = static_cast<float>(unit(rng));
  }

  std::uniform_int_distribution<std::size_t> label_len(spec.label_min,
                                                       spec.label_max);
  std::uniform_int_distribution<int> token(1,
                                           static_cast<int>(spec.vocab_size) - 1);
  std::uniform_int_distribution<std::size_t> gap(spec.gap_min, spec.gap_max);
  auto noise = [&]() {
    return spec.noise_sigma > 0 ? spec.noise_sigma * unit(rng) : 0.0;
  };
  auto silence = [&](Utterance& u) {
    const std::size_t g = gap(rng);
    for (std::size_t i = 0; i < g * f; ++i) {
      u.features.push_back(static_cast<float>(noise()));
    }
    u.num_frames += g;
  };

  Dataset ds;
  ds.feat_dim = f;
  ds.utterances.reserve(spec.num_utterances);
  for (std::size_t n = 0; n < spec.num_utterances; ++n) {
    Utterance u;
    u.id = UtteranceId(n);
    const std::size_t len = label_len(rng);
    for (std::size_t i = 0; i < len; ++i) u.labels.push_back(token(rng));
    silence(u);
    for (int id : u.labels) {
      const auto& proto = prototypes[static_cast<std::size_t>(id - 1)];
      for (float v : proto) {
        u.features.push_back(static_cast<float>(v + noise()));
      }
      u.num_frames += spec.pattern_len;
      silence(u);
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

void SaveDataset(const Dataset& dataset, const std::string& path) {
  std::string out(kMagic, 4);
  PutU32(out, static_cast<std::uint32_t>(dataset.size()));
  PutU32(out, static_cast<std::uint32_t>(dataset.feat_dim));
  for (const auto& u : dataset.utterances) {
    PutU32(out, static_cast<std::uint32_t>(u.num_frames));
    PutU32(out, static_cast<std::uint32_t>(u.labels.size()));
    for (float v : u.features) PutU32(out, std::bit_cast<std::uint32_t>(v));
    for (int id : u.labels) PutU32(out, static_cast<std::uint32_t>(id));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot open " + path + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("write failed for " + path);
}

Dataset LoadDataset(const std::string& path,
                    std::optional<std::size_t> expected_feat_dim) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open dataset " + path);
  Reader in(std::string(std::istreambuf_iterator<char>(file), {}));
  if (in.remaining() < 4 || std::memcmp(in.bytes().data(), kMagic, 4) != 0) {
    throw DatasetFormatError("bad magic in " + path + ": not a KFC1 dataset");
  }
  in.U32("magic");
  const std::uint32_t count = in.U32("utterance count");
  Dataset ds;
  ds.feat_dim = in.U32("feature dimension");
  if (ds.feat_dim == 0) {
    throw DatasetFormatError("dimension mismatch: feature dimension is 0");
  }
  if (expected_feat_dim && *expected_feat_dim != ds.feat_dim) {
    throw DatasetFormatError("dimension mismatch: file has feat_dim " +
                             std::to_string(ds.feat_dim) + ", expected " +
                             std::to_string(*expected_feat_dim));
  }
  ds.utterances.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    Utterance u;
    u.id = UtteranceId(n);
    u.num_frames = in.U32("frame count");
    const std::uint32_t num_labels = in.U32("label count");
    const std::size_t need =
        4 * (u.num_frames * ds.feat_dim + static_cast<std::size_t>(num_labels));
    if (need > in.remaining()) {
      throw DatasetFormatError(
          "truncated dataset: utterance " + std::to_string(n) + " declares " +
          std::to_string(u.num_frames) + " frames and " +
          std::to_string(num_labels) + " labels (" + std::to_string(need) +
          " bytes) but only " + std::to_string(in.remaining()) + " remain");
    }
    u.features.resize(u.num_frames * ds.feat_dim);
    for (float& v : u.features) v = in.F32();
    u.labels.resize(num_labels);
    for (int& id : u.labels) id = static_cast<int>(in.U32("label"));
    ds.utterances.push_back(std::move(u));
  }
  if (in.remaining() != 0) {
    throw DatasetFormatError(std::to_string(in.remaining()) +
                             " trailing bytes after the last utterance");
  }
  return ds;
}

Tensor Batch::Features(std::size_t b) const {
  const std::size_t t_max = features.dim(1), f = features.dim(2);
  const auto src = features.data().subspan(b * t_max * f, lengths[b] * f);
  return Tensor::FromData({lengths[b], f},
                          std::vector<double>(src.begin(), src.end()));
}

std::vector<Batch> MakeBatches(std::span<const Utterance> utterances,
                               std::size_t feat_dim, std::size_t max_batch) {
  if (utterances.empty()) throw std::invalid_argument("batch of no utterances");
  if (max_batch == 0) throw std::invalid_argument("max_batch must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < utterances.size(); start += max_batch) {
    const auto chunk = utterances.subspan(
        start, std::min(max_batch, utterances.size() - start));
    std::size_t t_max = 0;
    for (const auto& u : chunk) t_max = std::max(t_max, u.num_frames);
    std::vector<double> padded(chunk.size() * t_max * feat_dim, 0.0);
    Batch batch;
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto& u = chunk[b];
      std::copy(u.features.begin(), u.features.end(),
                padded.begin() + static_cast<long>(b * t_max * feat_dim));
      batch.lengths.push_back(u.num_frames);
      batch.labels.push_back(u.labels);
      batch.ids.push_back(u.id);
    }
    batch.features = Tensor::FromData({chunk.size(), t_max, feat_dim},
                                      std::move(padded));
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::pair<Dataset, Dataset> SplitDataset(const Dataset& dataset,
                                         double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1), got " +
                                std::to_string(train_fraction));
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(dataset.size())));
  std::pair<Dataset, Dataset> out;
  out.first.feat_dim = out.second.feat_dim = dataset.feat_dim;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& side = i < n_train ? out.first : out.second;
    side.utterances.push_back(dataset.utterances[order[i]]);
  }
  return out;
}

}  // namespace kfc
