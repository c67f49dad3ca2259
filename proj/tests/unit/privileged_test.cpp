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
#include <gtest/gtest.h>

#include <set>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/logging.hpp"
#include "lupidet/privileged.hpp"
#include "support/oracles.hpp"

namespace lupidet::privileged {
namespace {

TEST(IntensityMap, SmallClassCounts) {
  EXPECT_EQ(default_intensity_map(1), (std::vector<std::uint8_t>{255}));
  EXPECT_EQ(default_intensity_map(2), (std::vector<std::uint8_t>{128, 255}));
}

TEST(IntensityMap, InjectiveAndNonzeroForEveryCount) {
  for (int c = 1; c <= 255; ++c) {
    const auto m = default_intensity_map(c);
    ASSERT_EQ(m.size(), static_cast<std::size_t>(c));
    EXPECT_EQ(std::set<std::uint8_t>(m.begin(), m.end()).size(), m.size()) << c;
    EXPECT_GE(*std::min_element(m.begin(), m.end()), 1);
    EXPECT_EQ(m.back(), 255);
  }
  EXPECT_EQ(default_intensity_map(255).front(), 1);
  EXPECT_THROW(default_intensity_map(256), ValidationError);
  EXPECT_THROW(default_intensity_map(0), ValidationError);
}

TEST(MaskSpec, RejectsCollisions) {
  EXPECT_THROW((MaskSpec{{0, 5}}).validate(), ValidationError);
  EXPECT_THROW((MaskSpec{{5, 5}}).validate(), ValidationError);
  EXPECT_NO_THROW((MaskSpec{{5, 6}}).validate());
}

TEST(RenderMask, EmptySetIsBackground) {
  const auto r = render_bbox_mask({"e", {}}, 5, 7, default_mask_spec(2));
  EXPECT_EQ(r, ImageRaster(5, 7, 1, 0));
}

TEST(RenderMask, TwoByTwoBoxPaintsFourPixels) {
  const auto r = render_bbox_mask({"b", {{{0, 0, 2, 2}, 0, std::nullopt}}}, 6, 6, default_mask_spec(1));
  int lit = 0;
  for (auto p : r.pixels()) {
    if (p == 255) ++lit;
    else EXPECT_EQ(p, 0);
  }
  EXPECT_EQ(lit, 4);
}

TEST(RenderMask, SmallerBoxOverwritesLarger) {
  // the small box is listed first; size order, not list order, decides
  ObjectSet s{"n", {{{4, 4, 6, 6}, 1, std::nullopt}, {{0, 0, 10, 10}, 0, std::nullopt}}};
  const auto spec = default_mask_spec(2);
  const auto r = render_bbox_mask(s, 10, 10, spec);
  EXPECT_EQ(r.at(5, 5), spec.intensity[1]);
  EXPECT_EQ(r.at(1, 1), spec.intensity[0]);
  EXPECT_EQ(r.at(4, 6), spec.intensity[0]);
}

TEST(RenderMask, EqualAreasLaterListedWins) {
  ObjectSet s{"t", {{{0, 0, 4, 4}, 0, std::nullopt}, {{2, 2, 6, 6}, 1, std::nullopt}}};
  const auto spec = default_mask_spec(2);
  EXPECT_EQ(render_bbox_mask(s, 8, 8, spec).at(3, 3), spec.intensity[1]);
  std::swap(s.objects[0], s.objects[1]);
  EXPECT_EQ(render_bbox_mask(s, 8, 8, spec).at(3, 3), spec.intensity[0]);
}

TEST(RenderMask, FractionalCornersUseHalfOpenCoverage) {
  const auto r = render_bbox_mask({"f", {{{0.5, 1.2, 2.1, 2.0}, 0, std::nullopt}}}, 4, 4, default_mask_spec(1));
  // x in [0, 3), y in [1, 2)
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(r.at(y, x), (y == 1 && x < 3) ? 255 : 0) << y << "," << x;
}

TEST(RenderMask, RejectsOutOfRangeLabels) {
  EXPECT_THROW(render_bbox_mask({"x", {{{0, 0, 1, 1}, 3, std::nullopt}}}, 4, 4, default_mask_spec(2)),
               ValidationError);
}

TEST(RenderMask, MatchesPerPixelPainterOnRandomScenes) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int classes = static_cast<int>(rng.between(1, 3));
    ObjectSet s = testing::random_objects(rng, "r", 64, 64, 6, classes, 1, 40);
    // fractional corners exercise the floor/ceil coverage rule
    if (trial % 2) {
      for (auto& o : s.objects) {
        o.box.x_min += 0.5 * rng.uniform() * (o.box.width() > 1);
        o.box.y_max -= 0.5 * rng.uniform() * (o.box.height() > 1);
      }
    }
    const auto spec = default_mask_spec(classes);
    const auto got = render_bbox_mask(s, 64, 64, spec);
    const auto want = testing::paint_by_pixel(s, 64, 64, spec.intensity);
    ASSERT_EQ(got, want) << "trial " << trial;
  }
}

TEST(IngestRaster, PassthroughResizeAndErrors) {
  testing::TempDir dir("raster");
  Rng rng(2);
  const auto r = testing::random_raster(rng, 12, 10, 1);
  io::save_png(dir / "same.png", r);
  {
    log::WarningCapture w;
    EXPECT_EQ(ingest_raster(dir / "same.png", 12, 10), r);
    EXPECT_EQ(w.count(), 0u);
  }
  io::save_png(dir / "half.png", r.crop(0, 0, 5, 6));
  {
    log::WarningCapture w;
    const auto up = ingest_raster(dir / "half.png", 12, 10);
    EXPECT_EQ(up.height(), 12);
    EXPECT_EQ(up.width(), 10);
    EXPECT_EQ(up.channels(), 1);
    EXPECT_EQ(w.count(), 1u);
  }
  io::save_png(dir / "rgb.png", testing::random_raster(rng, 12, 10, 3));
  EXPECT_THROW(ingest_raster(dir / "rgb.png", 12, 10), ValidationError);
  EXPECT_THROW(ingest_raster(dir / "absent.png", 12, 10), Error);
}

TEST(Fuse, ExamplesAndRounding) {
  Rng rng(6);
  const auto a = testing::random_raster(rng, 9, 9, 1);
  EXPECT_EQ(fuse({a}, {{RasterRole::kSaliency}, {1.0}}), a);
  const ImageRaster zeros(4, 4, 1, 0), full(4, 4, 1, 255);
  EXPECT_EQ(fuse({zeros, full}, {{RasterRole::kSaliency, RasterRole::kDepth}, {0.5, 0.5}}), ImageRaster(4, 4, 1, 128));
  const auto b = testing::random_raster(rng, 9, 9, 1);
  EXPECT_EQ(fuse({a, b}, {{RasterRole::kSaliency, RasterRole::kDepth}, {1.0, 0.0}}), a);
}

TEST(Fuse, IdempotentOnIdenticalInputs) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = testing::random_raster(rng, 5, 6, 1);
    const double w0 = rng.uniform(), w1 = rng.uniform() * (1 - w0);
    const FusionSpec spec{{RasterRole::kSaliency, RasterRole::kDepth, RasterRole::kMask}, {w0, w1, 1 - w0 - w1}};
    EXPECT_EQ(fuse({a, a, a}, spec), a);
  }
}

TEST(Fuse, Errors) {
  const ImageRaster a(4, 4, 1), b(4, 5, 1);
  const FusionSpec two{{RasterRole::kSaliency, RasterRole::kDepth}, {0.5, 0.5}};
  EXPECT_THROW(fuse({a, b}, two), ValidationError);
  EXPECT_THROW(fuse({a}, two), ValidationError);
  EXPECT_THROW((FusionSpec{{RasterRole::kSaliency, RasterRole::kDepth}, {0.5, 0.6}}).validate(), ValidationError);
  EXPECT_THROW(parse_role("thermal"), ValidationError);
  EXPECT_EQ(parse_role(to_string(RasterRole::kDepth)), RasterRole::kDepth);
}

TEST(MaskFilename, UsesImageId) { EXPECT_EQ(mask_filename("img_7"), "img_7.mask.png"); }

}  // namespace
}  // namespace lupidet::privileged
