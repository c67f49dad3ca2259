// Copyright 2026 The lupidet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Run configuration: one JSON document drives every pipeline stage. Relative
// paths resolve against the config file's directory. Validation reports
// every problem at once, each prefixed with its field path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lupidet/dataset.hpp"
#include "lupidet/detector.hpp"
#include "lupidet/evaluation.hpp"
#include "lupidet/training.hpp"

namespace lupidet::cli {

inline constexpr int kSchemaVersion = 1;

struct DatasetBlock {
  std::string format = "coco";  // coco | voc | synthetic
  std::filesystem::path annotations;  // coco
  std::filesystem::path xml_dir;      // voc
  std::filesystem::path image_root;   // coco, voc
  std::vector<std::string> class_names;  // voc
  data::TileGrid tiling;
  data::SplitFractions split;
  std::uint64_t seed = 0;
  int target_size = 800;
  // synthetic: 0 images means the fixed 300/60/60 acceptance suite
  std::uint64_t synthetic_seed = 0;
  int synthetic_images = 0;
};

struct PrivilegedSource {
  std::string role;  // saliency | depth | mask
  std::filesystem::path dir;  // "<image_id>.png" per image; unused for role mask
};

struct PrivilegedBlock {
  std::string mode = "bbox_mask";  // bbox_mask | external | fusion
  std::vector<PrivilegedSource> sources;
  std::vector<double> weights;  // fusion
  std::vector<int> intensity_map;  // per class, overrides the default
};

struct ModelBlock {
  std::string architecture_id = "tiny_anchor_free";
  bool pretrained = false;
};

struct TrainBlock {
  train::TrainConfig config;
  std::optional<double> alpha;
  std::vector<double> alphas;
  std::filesystem::path teacher_checkpoint;
};

struct EvalBlock {
  eval::ReportOptions operating_point;
  std::string split = "test";
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::filesystem::path output_dir;
  DatasetBlock dataset;
  PrivilegedBlock privileged;
  ModelBlock model;
  TrainBlock train;
  EvalBlock eval;

  // type and unknown-field problems found while parsing
  std::vector<std::string> parse_problems;

  /// Parses without validating; only malformed JSON throws. Command-line
  /// overrides are applied before validate().
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Problems as "field.path: message"; empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;
};

}  // namespace lupidet::cli
