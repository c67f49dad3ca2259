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

// Deterministic shapes-on-noise detection scenes with exact annotations.
// All placement and shading is integer arithmetic so output is identical
// across platforms for a given seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lupidet/dataset.hpp"
#include "lupidet/types.hpp"

namespace lupidet::synth {

enum class ShapeKind { kCircle, kSquare, kTriangle };

std::string to_string(ShapeKind kind);

struct SceneSpec {
  int image_size = 64;
  std::vector<ShapeKind> class_shapes = {ShapeKind::kCircle, ShapeKind::kSquare, ShapeKind::kTriangle};
  int min_objects = 1;
  int max_objects = 4;
  int min_size = 10;  // shape side / diameter in pixels
  int max_size = 20;
  // background value noise
  int noise_amplitude = 110;
  int noise_cell = 8;
  int pixel_noise = 20;
  // unannotated clutter drawn beneath the objects
  int min_distractors = 2;
  int max_distractors = 5;
  // objects are tinted toward the local background by this many percent
  int object_blend = 35;
  std::uint64_t seed = 0;

  int class_count() const { return static_cast<int>(class_shapes.size()); }
  /// Throws ValidationError for infeasible specs.
  void validate() const;
};

/// Whether pixel (x, y) belongs to a shape of `size` whose bounding square
/// starts at (ox, oy).
bool shape_contains(ShapeKind kind, int ox, int oy, int size, int x, int y);

struct Scene {
  DatasetTriplet triplet;
  ImageRaster instance_ids;  // 0 = background, k = k-th object (1-based)
};

/// Renders image `index` of the stream defined by spec.seed.
Scene render_scene(const SceneSpec& spec, int index);

/// n_images scenes, class-balanced over the whole set. Privileged rasters
/// are left empty.
std::vector<DatasetTriplet> generate(const SceneSpec& spec, int n_images);

/// Class names used for the label map ("circle", "square", ...).
LabelMap label_map(const SceneSpec& spec);

/// Fixed acceptance benchmark: 3 classes, 64x64, 1-4 objects per image,
/// 300/60/60 train/val/test images.
SceneSpec acceptance_spec(std::uint64_t seed);
data::Split make_acceptance_suite(std::uint64_t seed);

/// Writes <dir>/images/<id>.png and <dir>/annotations.json (COCO). Returns
/// the number of files written or changed.
int write_dataset(const std::filesystem::path& dir, const std::vector<DatasetTriplet>& triplets,
                  const LabelMap& labels);

}  // namespace lupidet::synth
