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

// Checkpoint directory layout:
//   config.json    {"model": {...}} (possibly with more run settings)
//   manifest.json  [{"name": ..., "shape": [...]}, ...] in weight order
//   weights.bin    concatenated little-endian float32 values

#ifndef KFC_CHECKPOINT_H_
#define KFC_CHECKPOINT_H_

#include <stdexcept>
#include <string>

#include "kfc/model.h"

namespace kfc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";
inline constexpr const char* kConfigFile = "config.json";

// Writes manifest.json and weights.bin. config.json is written only when
// `write_config` is set.
void SaveCheckpoint(const Model& model, const std::string& dir,
                    bool write_config = true);

// Rebuilds the model from config.json and restores every parameter.
Model LoadCheckpoint(const std::string& dir);

}  // namespace kfc

#endif  // KFC_CHECKPOINT_H_
