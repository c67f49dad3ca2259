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
#include "lupidet/types.hpp"

#include <cmath>

#include "lupidet/error.hpp"

namespace lupidet {

bool BoundingBox::valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max;
}

BoundingBox BoundingBox::clipped(double width, double height) const {
  return {std::clamp(x_min, 0.0, width), std::clamp(y_min, 0.0, height),
          std::clamp(x_max, 0.0, width), std::clamp(y_max, 0.0, height)};
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

ImageRaster::ImageRaster(int height, int width, int channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0) throw ValidationError("raster dimensions must be positive");
  if (channels != 1 && channels != 3) {
    throw ValidationError("raster channel count must be 1 or 3, got " + std::to_string(channels));
  }
  pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageRaster::ImageRaster(int height, int width, int channels, std::vector<std::uint8_t> pixels)
    : ImageRaster(height, width, channels) {
  if (pixels.size() != pixels_.size()) {
    throw ValidationError("raster buffer size does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
  pixels_ = std::move(pixels);
}

ImageRaster ImageRaster::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width_ || y0 + h > height_) {
    throw ValidationError("crop rectangle outside raster");
  }
  ImageRaster out(h, w, channels_);
  const std::size_t row = static_cast<std::size_t>(w) * channels_;
  for (int y = 0; y < h; ++y) {
    const auto* src = &pixels_[(static_cast<std::size_t>(y0 + y) * width_ + x0) * channels_];
    std::copy(src, src + row, &out.at(y, 0));
  }
  return out;
}

void DatasetTriplet::validate() const {
  if (image.channels() != 3) {
    throw ValidationError(id() + ": image must have 3 channels");
  }
  if (privileged) {
    if (privileged->channels() != 1) {
      throw ValidationError(id() + ": privileged raster must be single-channel");
    }
    if (privileged->height() != image.height() || privileged->width() != image.width()) {
      throw ValidationError(id() + ": privileged raster size differs from image");
    }
  }
}

}  // namespace lupidet
