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

// Training-only rasters: bounding-box masks rendered from annotations, and
// externally produced saliency/depth maps with their weighted fusion.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lupidet/types.hpp"

namespace lupidet::privileged {

/// Grayscale value per class index. Background is always 0.
struct MaskSpec {
  std::vector<std::uint8_t> intensity;  // indexed by class

  int class_count() const { return static_cast<int>(intensity.size()); }
  /// Injective, no zero entries.
  void validate() const;
};

/// class c -> round(255 * (c + 1) / C), half rounded up. Requires 1 <= C <= 255.
std::vector<std::uint8_t> default_intensity_map(int class_count);

inline MaskSpec default_mask_spec(int class_count) { return {default_intensity_map(class_count)}; }

/// Black raster with each box filled at its class intensity. Boxes are
/// painted largest-area first (stable for ties, so later objects win) and
/// cover pixels [floor(x_min), ceil(x_max)) x [floor(y_min), ceil(y_max)).
ImageRaster render_bbox_mask(const ObjectSet& truth, int height, int width, const MaskSpec& spec);

/// Loads a single-channel 8-bit raster, resizing bilinearly (with a
/// warning) when it does not match expected_height x expected_width.
ImageRaster ingest_raster(const std::filesystem::path& path, int expected_height, int expected_width);

enum class RasterRole { kSaliency, kDepth, kMask };

RasterRole parse_role(const std::string& name);
std::string to_string(RasterRole role);

struct FusionSpec {
  std::vector<RasterRole> sources;
  std::vector<double> weights;

  void validate() const;
};

/// Pixelwise convex combination, rounded half-up to 8 bits.
ImageRaster fuse(const std::vector<ImageRaster>& rasters, const FusionSpec& spec);

/// "<image_id>.mask.png"
std::string mask_filename(const std::string& image_id);

}  // namespace lupidet::privileged
