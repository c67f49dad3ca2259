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

// Shared helpers for the test suites: scratch directories and small random
// scene generators. Generators draw integer coordinates so oracles can be
// exact.

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "lupidet/rng.hpp"
#include "lupidet/types.hpp"

namespace lupidet::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lupidet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Box with integer corners inside [0,width]x[0,height], sides in
/// [min_side, max_side] (clamped to the image).
inline BoundingBox random_box(Rng& rng, int width, int height, int min_side, int max_side) {
  const int w = static_cast<int>(rng.between(min_side, std::min(max_side, width)));
  const int h = static_cast<int>(rng.between(min_side, std::min(max_side, height)));
  const int x = static_cast<int>(rng.between(0, width - w));
  const int y = static_cast<int>(rng.between(0, height - h));
  return {double(x), double(y), double(x + w), double(y + h)};
}

inline ObjectSet random_objects(Rng& rng, const std::string& id, int width, int height, int max_objects,
                                int classes, int min_side, int max_side) {
  ObjectSet s{id, {}};
  const int n = static_cast<int>(rng.between(0, max_objects));
  for (int i = 0; i < n; ++i) {
    s.objects.push_back({random_box(rng, width, height, min_side, max_side),
                         static_cast<int>(rng.below(classes)), std::nullopt});
  }
  return s;
}

inline ImageRaster random_raster(Rng& rng, int height, int width, int channels) {
  ImageRaster r(height, width, channels);
  for (auto& p : r.pixels()) p = static_cast<std::uint8_t>(rng.below(256));
  return r;
}

}  // namespace lupidet::testing
