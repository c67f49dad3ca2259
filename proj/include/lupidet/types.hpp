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

// Core data model shared by every module: boxes, labelled objects, rasters
// and (image, privileged raster, annotation) training triplets.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lupidet {

/// Axis-aligned box in continuous pixel coordinates of the image frame.
/// Valid boxes satisfy x_min < x_max, y_min < y_max, all finite and >= 0.
struct BoundingBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const;

  /// Intersection with [0,width]x[0,height].
  BoundingBox clipped(double width, double height) const;

  bool operator==(const BoundingBox&) const = default;
};

/// Intersection-over-union; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

struct LabeledObject {
  BoundingBox box;
  int label = 0;
  std::optional<double> score;  // set on predictions only

  bool operator==(const LabeledObject&) const = default;
};

/// Annotation set of one image, or a detector's predictions for it.
struct ObjectSet {
  std::string image_id;
  std::vector<LabeledObject> objects;

  std::size_t size() const { return objects.size(); }
  bool empty() const { return objects.empty(); }
  bool operator==(const ObjectSet&) const = default;
};

/// 8-bit raster with interleaved channels (HWC). RGB images have three
/// channels, privileged rasters one.
class ImageRaster {
 public:
  ImageRaster() = default;
  ImageRaster(int height, int width, int channels, std::uint8_t fill = 0);
  ImageRaster(int height, int width, int channels, std::vector<std::uint8_t> pixels);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  /// Copy of the rectangle [x0,x0+w) x [y0,y0+h).
  ImageRaster crop(int x0, int y0, int w, int h) const;

  bool operator==(const ImageRaster&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// One training sample: image x, optional privileged raster x*, truth y.
struct DatasetTriplet {
  ImageRaster image;
  std::optional<ImageRaster> privileged;
  ObjectSet truth;

  const std::string& id() const { return truth.image_id; }

  /// Throws ValidationError when the privileged raster is not single-channel
  /// or not pixel-aligned with the image.
  void validate() const;
};

/// Contiguous class indices with the dataset's original ids and names.
struct LabelMap {
  std::vector<std::string> names;
  std::vector<std::int64_t> original_ids;

  int class_count() const { return static_cast<int>(names.size()); }
  bool operator==(const LabelMap&) const = default;
};

}  // namespace lupidet
