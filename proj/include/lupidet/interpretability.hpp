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

// Grad-CAM at a detector's tap point, and colour overlays of the result.

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "lupidet/detector.hpp"
#include "lupidet/types.hpp"

namespace lupidet::cam {

/// Row-major grid of values in [0, 1] at tap resolution.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  /// Row and column of the largest value (first in row-major order on ties).
  std::pair<int, int> argmax() const;
};

/// Scalar objective differentiated by grad_cam: the sum of the top_k
/// candidate class scores of the image.
struct CamTarget {
  int top_k = 5;
};

/// Min-max rescale to [0, 1]; constant maps become all zero.
Heatmap normalize(Heatmap map);

/// Channel weights are the spatial mean of d(target)/d(tap); the map is the
/// positive part of the weighted channel sum, min-max normalized. A map that
/// is constant before normalization (vanishing gradients or activations)
/// comes back all zero with a warning. `image` is one input [C, S, S].
Heatmap grad_cam(detection::DetectorHandle& handle, const torch::Tensor& image, const CamTarget& target = {});

/// Colour lookup for a value in [0, 1]. Known ids: "hot", "jet", "gray".
std::array<std::uint8_t, 3> colormap(const std::string& id, double value);

/// Heatmap upsampled bilinearly to the image, coloured, and blended 50/50
/// with the RGB image.
ImageRaster overlay(const Heatmap& heatmap, const ImageRaster& image, const std::string& colormap_id = "hot");

/// "{image_id}.{run_label}.gradcam.png"
std::string overlay_filename(const std::string& image_id, const std::string& run_label);

/// Writes the overlay PNG (and the raw grid as CSV when asked) into dir.
/// Returns the PNG path.
std::filesystem::path write_overlay(const std::filesystem::path& dir, const std::string& image_id,
                                    const std::string& run_label, const Heatmap& heatmap, const ImageRaster& image,
                                    const std::string& colormap_id = "hot", bool dump_csv = false);

}  // namespace lupidet::cam
