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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lupidet/types.hpp"

namespace lupidet::io {

/// Loads an 8-bit PNG/JPEG as RGB (3 channels) regardless of its storage.
ImageRaster load_rgb(const std::filesystem::path& path);

/// Loads an image keeping its stored channel count (1 or 3, RGB order).
/// Throws ValidationError for other channel counts or bit depths.
ImageRaster load_unchanged(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const ImageRaster& raster);
void save_png(const std::filesystem::path& path, const ImageRaster& raster);

/// Writes bytes only when the file is absent or differs. Returns true when
/// the file was written.
bool write_if_changed(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
bool write_if_changed(const std::filesystem::path& path, const std::string& text);

/// Bilinear resize of an 8-bit raster.
ImageRaster resize_bilinear(const ImageRaster& raster, int height, int width);

/// Bilinear resize of a single-channel float grid stored row-major.
std::vector<float> resize_bilinear(std::span<const float> grid, int height, int width,
                                   int out_height, int out_width);

}  // namespace lupidet::io
