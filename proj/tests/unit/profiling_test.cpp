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

#include "lupidet/adapters.hpp"
#include "lupidet/profiling.hpp"
#include "lupidet/training.hpp"
#include "support/nn_fixtures.hpp"

namespace lupidet::profiling {
namespace {

using detection::build_detector;

TEST(Profile, StaticFieldsIgnoreRepeatsAndBatch) {
  auto h = build_detector(detection::kTinyAnchorFree, 3, false, 1);
  const auto one = profile(h, torch::randn({1, 3, 32, 32}), 1);
  const auto ten = profile(h, torch::randn({2, 3, 32, 32}), 10);
  EXPECT_EQ(one.size_mb, ten.size_mb);
  EXPECT_EQ(one.parameters_m, ten.parameters_m);
  EXPECT_EQ(one.approx_gflops, ten.approx_gflops);
  EXPECT_EQ(one.timed_batches, 1);
  EXPECT_EQ(ten.timed_batches, 10);
  EXPECT_GE(one.warmup_batches, kMinWarmup);
  EXPECT_GT(one.fps, 0.0);
  EXPECT_DOUBLE_EQ(one.parameters_m, h.parameter_count() / 1e6);
  EXPECT_DOUBLE_EQ(one.size_mb, detection::serialized_size(h) / 1048576.0);
}

TEST(Profile, GflopsAreTwiceTheLayerWalkMacs) {
  auto h = build_detector(detection::kMiniRetinaNet, 3, false);
  double macs = 0;
  for (const auto& c : *h.module().layer_costs(800, 800)) macs += c.macs;
  ASSERT_TRUE(approx_gflops(h, 800, 800).has_value());
  EXPECT_DOUBLE_EQ(*approx_gflops(h, 800, 800), 2 * macs / 1e9);
}

TEST(Profile, BaselineAndStudentShareStaticCost) {
  const auto samples = testing::prepared_scenes(3, 8, 32);
  train::TrainData data{samples, {}};
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  for (const auto& id : detection::registered_architectures()) {
    auto base = train::train_baseline(data, build_detector(id, 3, false, 1), cfg).last;
    auto teacher = detection::extend_input_channels(build_detector(id, 3, false, 1));
    auto student = train::train_student(data, teacher, build_detector(id, 3, false, 2), lupi::AlphaWeight(0.5), cfg).last;
    const auto x = torch::randn({1, 3, 32, 32});
    const auto a = profile(base, x, 3), b = profile(student, x, 3);
    EXPECT_EQ(a.size_mb, b.size_mb) << id;
    EXPECT_EQ(a.parameters_m, b.parameters_m) << id;
    EXPECT_EQ(a.approx_gflops, b.approx_gflops) << id;
  }
}

TEST(ProfileCsv, ColumnsAndUnavailableGflops) {
  EXPECT_EQ(csv_header(), "model,size_mb,parameters_m,gflops,fps");
  RuntimeProfile p;
  p.label = "m";
  p.size_mb = 1.5;
  p.parameters_m = 0.25;
  p.fps = 10;
  const auto row = csv_row(p);
  EXPECT_EQ(row.rfind("m,", 0), 0u);
  EXPECT_NE(row.find("n/a"), std::string::npos);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 4);
}

}  // namespace
}  // namespace lupidet::profiling
