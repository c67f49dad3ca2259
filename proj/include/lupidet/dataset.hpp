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

// Dataset ingestion (COCO JSON, VOC XML), grid tiling, model-input
// preprocessing and deterministic train/val/test splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lupidet/types.hpp"

namespace lupidet::data {

struct IngestResult {
  std::vector<DatasetTriplet> triplets;
  LabelMap labels;
  std::size_t dropped_degenerate = 0;
};

/// Reads a COCO detection file. Boxes go from [x,y,w,h] to corner form and
/// are clipped to the image; category ids are remapped to contiguous
/// indices in ascending id order. Degenerate boxes are dropped with a
/// warning.
IngestResult ingest_coco(const std::filesystem::path& annotation_file,
                         const std::filesystem::path& image_root);

/// Reads every *.xml under xml_dir. VOC's 1-based inclusive pixel
/// coordinates become x_min = xmin - 1, x_max = xmax.
IngestResult ingest_voc(const std::filesystem::path& xml_dir,
                        const std::filesystem::path& image_root,
                        const std::vector<std::string>& class_names);

/// Writes triplets as images/<id>.png plus a COCO annotation file. Label
/// indices map back to labels.original_ids.
void write_coco(const std::filesystem::path& annotation_file, const std::vector<DatasetTriplet>& triplets,
                const LabelMap& labels);

/// COCO JSON text for the given triplets (deterministic key order).
std::string coco_json(const std::vector<DatasetTriplet>& triplets, const LabelMap& labels);

struct TileGrid {
  int rows = 1;
  int cols = 1;
};

/// Fraction of a box's area that must survive clipping for it to be kept
/// in a tile.
inline constexpr double kTileKeepFraction = 0.2;

/// Splits a triplet into rows x cols tiles. The last row and column absorb
/// remainder pixels. A box is copied, clipped and shifted into every tile
/// it overlaps whose clipped area is at least kTileKeepFraction of the
/// original. A 1x1 grid returns the input unchanged.
std::vector<DatasetTriplet> tile(const DatasetTriplet& triplet, TileGrid grid);

/// Pixel rectangle of tile (row, col) as {x0, y0, width, height}.
std::array<int, 4> tile_rect(int image_height, int image_width, TileGrid grid, int row, int col);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PreprocessConfig {
  int target_size = 800;
  bool min_max = true;
  bool standardize = true;
  std::optional<ChannelStats> channel_stats;  // dataset-global; per-image when absent

  void validate() const;
};

/// Model-frame <-> image-frame box mapping recorded by preprocess().
struct CoordTransform {
  double scale_x = 1.0;
  double scale_y = 1.0;

  BoundingBox to_model(const BoundingBox& b) const;
  BoundingBox to_image(const BoundingBox& b) const;
  ObjectSet to_image(const ObjectSet& s) const;
};

/// Model-ready sample: CHW float values for RGB (+ privileged when the
/// triplet carries one), annotations in the resized frame.
struct PreparedSample {
  std::string image_id;
  int channels = 0;
  int size = 0;
  std::vector<float> values;
  ObjectSet truth;
  CoordTransform transform;
  int source_height = 0;
  int source_width = 0;
};

/// Per-channel min-max to [0,1], bilinear resize to target_size square,
/// per-channel standardization. Constant channels map to zero.
PreparedSample preprocess(const DatasetTriplet& triplet, const PreprocessConfig& cfg);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Split {
  std::vector<DatasetTriplet> train;
  std::vector<DatasetTriplet> val;
  std::vector<DatasetTriplet> test;
};

/// Seeded permutation, then val = floor(n*val), test = floor(n*test), the
/// remainder to train.
Split split(std::vector<DatasetTriplet> dataset, SplitFractions fractions, std::uint64_t seed);

/// Writes train.txt / val.txt / test.txt (one image id per line) and returns
/// how many files changed.
int write_split_manifest(const std::filesystem::path& dir, const Split& s);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};
SplitManifest read_split_manifest(const std::filesystem::path& dir);

}  // namespace lupidet::data
