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
#include "lupidet/privileged.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/logging.hpp"

namespace lupidet::privileged {

void MaskSpec::validate() const {
  if (intensity.empty()) throw ValidationError("mask spec has no classes");
  std::set<std::uint8_t> seen;
  for (std::uint8_t v : intensity) {
    if (v == 0) throw ValidationError("class intensity 0 collides with the background");
    if (!seen.insert(v).second) throw ValidationError("class intensities must be distinct");
  }
}

std::vector<std::uint8_t> default_intensity_map(int class_count) {
  if (class_count < 1) throw ValidationError("class count must be at least 1");
  if (class_count > 255) {
    throw ValidationError("class count " + std::to_string(class_count) +
                          " exceeds the 255 available grayscale levels");
  }
  std::vector<std::uint8_t> map(class_count);
  for (int c = 0; c < class_count; ++c) {
    // floor(255(c+1)/C + 1/2) in integer arithmetic
    map[c] = static_cast<std::uint8_t>((2 * 255 * (c + 1) + class_count) / (2 * class_count));
  }
  return map;
}

ImageRaster render_bbox_mask(const ObjectSet& truth, int height, int width, const MaskSpec& spec) {
  ImageRaster mask(height, width, 1, 0);
  std::vector<std::size_t> order(truth.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return truth.objects[a].box.area() > truth.objects[b].box.area();
  });
  for (std::size_t idx : order) {
    const auto& o = truth.objects[idx];
    if (o.label < 0 || o.label >= spec.class_count()) {
      throw ValidationError(truth.image_id + ": label " + std::to_string(o.label) +
                            " outside the mask spec");
    }
    const std::uint8_t value = spec.intensity[o.label];
    const int x0 = std::clamp(static_cast<int>(std::floor(o.box.x_min)), 0, width);
    const int x1 = std::clamp(static_cast<int>(std::ceil(o.box.x_max)), 0, width);
    const int y0 = std::clamp(static_cast<int>(std::floor(o.box.y_min)), 0, height);
    const int y1 = std::clamp(static_cast<int>(std::ceil(o.box.y_max)), 0, height);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) mask.at(y, x) = value;
    }
  }
  return mask;
}

ImageRaster ingest_raster(const std::filesystem::path& path, int expected_height, int expected_width) {
  ImageRaster raster = io::load_unchanged(path);
  if (raster.channels() != 1) {
    throw ValidationError(path.string() + ": privileged raster must be single-channel, found " +
                          std::to_string(raster.channels()) + " channels");
  }
  if (raster.height() != expected_height || raster.width() != expected_width) {
    log::warn(path.string() + ": raster is " + std::to_string(raster.height()) + "x" +
              std::to_string(raster.width()) + ", resizing to " + std::to_string(expected_height) +
              "x" + std::to_string(expected_width));
    raster = io::resize_bilinear(raster, expected_height, expected_width);
  }
  return raster;
}

RasterRole parse_role(const std::string& name) {
  if (name == "saliency") return RasterRole::kSaliency;
  if (name == "depth") return RasterRole::kDepth;
  if (name == "mask") return RasterRole::kMask;
  throw ValidationError("unknown raster role '" + name + "' (expected saliency, depth or mask)");
}

std::string to_string(RasterRole role) {
  switch (role) {
    case RasterRole::kSaliency:
      return "saliency";
    case RasterRole::kDepth:
      return "depth";
    case RasterRole::kMask:
      return "mask";
  }
  return "unknown";
}

void FusionSpec::validate() const {
  if (sources.empty()) throw ValidationError("fusion needs at least one source");
  if (weights.size() != sources.size()) throw ValidationError("fusion weights and sources differ in length");
  double sum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw ValidationError("fusion weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("fusion weights must sum to 1");
}

ImageRaster fuse(const std::vector<ImageRaster>& rasters, const FusionSpec& spec) {
  spec.validate();
  if (rasters.size() != spec.sources.size()) {
    throw ValidationError("expected " + std::to_string(spec.sources.size()) + " rasters, got " +
                          std::to_string(rasters.size()));
  }
  const int h = rasters.front().height();
  const int w = rasters.front().width();
  for (const auto& r : rasters) {
    if (r.channels() != 1) throw ValidationError("fusion inputs must be single-channel");
    if (r.height() != h || r.width() != w) throw ValidationError("fusion inputs differ in size");
  }
  ImageRaster out(h, w, 1);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < rasters.size(); ++k) acc += spec.weights[k] * rasters[k].pixels()[i];
    dst[i] = static_cast<std::uint8_t>(std::clamp(std::floor(acc + 0.5), 0.0, 255.0));
  }
  return out;
}

std::string mask_filename(const std::string& image_id) { return image_id + ".mask.png"; }

}  // namespace lupidet::privileged
