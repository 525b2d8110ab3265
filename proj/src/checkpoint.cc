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

#include "kfc/checkpoint.h"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace kfc {

namespace fs = std::filesystem;

namespace {

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing checkpoint file " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void WriteFile(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

nlohmann::json ParseJson(const fs::path& path) {
  try {
    return nlohmann::json::parse(ReadFile(path));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt " + path.string() + ": " + e.what());
  }
}

}  // namespace

void SaveCheckpoint(const Model& model, const std::string& dir,
                    bool write_config) {
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  std::string weights;
  for (const auto& p : model.Parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    for (double v : p.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) {
        weights.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
      }
    }
  }
  WriteFile(fs::path(dir) / kManifestFile, manifest.dump(2) + "\n");
  WriteFile(fs::path(dir) / kWeightsFile, weights);
  if (write_config) {
    nlohmann::json config = {{"model", ToJson(model.config())}};
    WriteFile(fs::path(dir) / kConfigFile, config.dump(2) + "\n");
  }
}

Model LoadCheckpoint(const std::string& dir) {
  const nlohmann::json config = ParseJson(fs::path(dir) / kConfigFile);
  if (!config.is_object() || !config.contains("model")) {
    throw CheckpointError("config.json in " + dir + " has no \"model\" section");
  }
  Model model(ModelConfigFromJson(config.at("model")));

  const nlohmann::json manifest = ParseJson(fs::path(dir) / kManifestFile);
  if (!manifest.is_array()) {
    throw CheckpointError("corrupt manifest: expected a list of tensors");
  }
  auto params = model.Parameters();
  if (manifest.size() != params.size()) {
    throw CheckpointError("config mismatch: manifest lists " +
                          std::to_string(manifest.size()) +
                          " tensors, config implies " +
                          std::to_string(params.size()));
  }
  const std::string weights = ReadFile(fs::path(dir) / kWeightsFile);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    std::string name;
    Shape shape;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("corrupt manifest entry " + std::to_string(i) +
                            ": " + e.what());
    }
    auto& param = params[i];
    if (name != param.name) {
      throw CheckpointError("config mismatch: manifest entry " +
                            std::to_string(i) + " is '" + name +
                            "', config expects '" + param.name + "'");
    }
    if (shape != param.tensor.shape()) {
      throw CheckpointError("config mismatch: '" + name + "' has shape " +
                            ShapeToString(shape) + " in manifest, config "
                            "implies " + ShapeToString(param.tensor.shape()));
    }
    const std::size_t bytes = 4 * param.tensor.numel();
    if (offset + bytes > weights.size()) {
      throw CheckpointError("weights.bin truncated while reading '" + name +
                            "' (needs " + std::to_string(bytes) +
                            " bytes, " + std::to_string(weights.size() - offset) +
                            " left)");
    }
    auto data = param.tensor.mutable_data();
    for (double& v : data) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(weights[offset++]))
                << (8 * b);
      }
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (offset != weights.size()) {
    throw CheckpointError("weights.bin has " +
                          std::to_string(weights.size() - offset) +
                          " unexpected trailing bytes");
  }
  return model;
}

}  // namespace kfc
