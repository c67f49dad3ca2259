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

#include "lupidet/error.hpp"
#include "lupidet/evaluation.hpp"
#include "support/oracles.hpp"

namespace lupidet::eval {
namespace {

constexpr double kOracleTolerance = 1e-9;

LabeledObject gt(BoundingBox b, int label = 0) { return {b, label, std::nullopt}; }
LabeledObject det(BoundingBox b, double score, int label = 0) { return {b, label, score}; }

TEST(Match, ExactHitIsTruePositiveEverywhere) {
  const ObjectSet truths{"a", {gt({0, 0, 10, 10})}};
  const ObjectSet dets{"a", {det({0, 0, 10, 10}, 0.9)}};
  const auto m = match(dets, truths, coco_iou_thresholds());
  for (std::size_t t = 0; t < m.thresholds.size(); ++t) {
    EXPECT_TRUE(m.true_positive(t, 0));
    EXPECT_EQ(m.false_negatives(t), 0u);
  }
}

TEST(Match, OneTruthClaimedOnce) {
  const ObjectSet truths{"a", {gt({0, 0, 10, 10})}};
  const ObjectSet dets{"a", {det({0, 0, 10, 10}, 0.5), det({0, 0, 10, 10}, 0.9)}};
  const auto m = match(dets, truths, {0.5});
  EXPECT_FALSE(m.true_positive(0, 0));
  EXPECT_TRUE(m.true_positive(0, 1));
  EXPECT_EQ(m.truth_match[0][0], 1);
}

TEST(Match, ThresholdStraddle) {
  // overlap 60 of a 100-pixel truth, union 100: IoU 0.6
  const ObjectSet truths{"a", {gt({0, 0, 10, 10})}};
  const ObjectSet dets{"a", {det({0, 0, 10, 6}, 0.9)}};
  const auto m = match(dets, truths, {0.5, 0.75});
  EXPECT_TRUE(m.true_positive(0, 0));
  EXPECT_FALSE(m.true_positive(1, 0));
  EXPECT_EQ(m.false_negatives(1), 1u);
}

TEST(Match, ClassMustAgree) {
  const ObjectSet truths{"a", {gt({0, 0, 10, 10}, 1)}};
  const ObjectSet dets{"a", {det({0, 0, 10, 10}, 0.9, 0)}};
  EXPECT_FALSE(match(dets, truths, {0.5}).true_positive(0, 0));
}

TEST(AveragePrecision, PerfectEmptyAndAbsent) {
  EXPECT_DOUBLE_EQ(average_precision({{0.9, true}, {0.8, true}}, 2), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({}, 3), 0.0);
  EXPECT_DOUBLE_EQ(average_precision({{0.9, false}}, 0), kUndefined);
}

TEST(AveragePrecision, HandcraftedThreeDetectionsTwoTruths) {
  // recall/precision: (.5, 1), (.5, .5), (1, 2/3). The envelope is 1 up to
  // recall .50 (51 sample points) and 2/3 above (50 points).
  const double expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
  const std::vector<ScoredOutcome> outcomes{{0.9, true}, {0.8, false}, {0.7, true}};
  EXPECT_NEAR(average_precision(outcomes, 2), expected, 1e-12);
  testing::coco_oracle::Cell cell{{{0.9, true}, {0.8, false}, {0.7, true}}, 2};
  EXPECT_NEAR(testing::coco_oracle::ap_101(cell), expected, 1e-12);
}

TEST(AveragePrecision, TopScoredHitsNeverLowerIt) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredOutcome> outcomes;
    const int n = static_cast<int>(rng.between(0, 10));
    std::size_t tps = 0;
    for (int i = 0; i < n; ++i) {
      const bool tp = rng.uniform() < 0.5;
      tps += tp;
      outcomes.push_back({0.1 + 0.8 * rng.uniform(), tp});
    }
    const std::size_t truths = tps + static_cast<std::size_t>(rng.between(1, 3));
    const double base = average_precision(outcomes, truths);
    auto with_hit = outcomes;
    with_hit.push_back({0.95, true});
    EXPECT_GE(average_precision(with_hit, truths), base - 1e-12);
    auto with_miss = outcomes;
    with_miss.push_back({0.01, false});
    EXPECT_LE(average_precision(with_miss, truths), base + 1e-12);
  }
}

TEST(ScaleBuckets, CocoBoundaries) {
  EXPECT_EQ(bucket_of(31.0 * 32.0), ScaleBucket::kSmall);
  EXPECT_EQ(bucket_of(32.0 * 32.0), ScaleBucket::kMedium);
  EXPECT_EQ(bucket_of(96.0 * 96.0 - 1), ScaleBucket::kMedium);
  EXPECT_EQ(bucket_of(96.0 * 96.0), ScaleBucket::kLarge);
}

std::vector<ObjectSet> as_perfect(const std::vector<ObjectSet>& truths) {
  std::vector<ObjectSet> out = truths;
  for (auto& s : out)
    for (auto& o : s.objects) o.score = 1.0;
  return out;
}

TEST(CocoReport, PerfectPredictionsScoreOne) {
  // one object per image so the cross-class per-image caps do not bind
  std::vector<ObjectSet> truths{{"a", {gt({0, 0, 10, 10}, 0)}},
                                {"b", {gt({0, 0, 50, 50}, 1)}},
                                {"c", {gt({5, 5, 150, 150}, 0)}}};
  const auto r = coco_report(as_perfect(truths), truths, 3);
  for (const auto& [name, value] : r.metrics()) EXPECT_DOUBLE_EQ(value, 1.0) << name;
  EXPECT_EQ(r.class_ap[2], kUndefined);
}

TEST(CocoReport, PerImageCapLimitsRecallAtOne) {
  std::vector<ObjectSet> truths{{"a", {gt({0, 0, 10, 10}), gt({20, 20, 30, 30})}}};
  const auto r = coco_report(as_perfect(truths), truths, 1);
  EXPECT_DOUBLE_EQ(r.map_50_95, 1.0);
  EXPECT_DOUBLE_EQ(r.mar_100, 1.0);
  EXPECT_DOUBLE_EQ(r.mar_1, 0.5);
}

TEST(CocoReport, NoSmallObjectsGivesSentinel) {
  std::vector<ObjectSet> truths{{"a", {gt({0, 0, 40, 40})}}, {"b", {gt({0, 0, 120, 120})}}};
  const auto r = coco_report(as_perfect(truths), truths, 1);
  EXPECT_EQ(r.map_small, kUndefined);
  EXPECT_EQ(r.mar_small, kUndefined);
  EXPECT_EQ(format_metric(r.map_small), "–");
  EXPECT_EQ(format_metric(0.456), "0.46");
  EXPECT_EQ(r.object_count[static_cast<int>(ScaleBucket::kSmall)], 0u);
}

TEST(CocoReport, ZeroDetections) {
  std::vector<ObjectSet> truths{{"a", {gt({0, 0, 40, 40})}}};
  const auto r = coco_report({{"a", {}}}, truths, 1);
  EXPECT_DOUBLE_EQ(r.map_50_95, 0.0);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.f1, 0.0);
}

TEST(CocoReport, HandcraftedFourImageDataset) {
  // small, medium and large truths across two classes, with a duplicate,
  // a wrong-class hit, a loose box and a miss
  std::vector<ObjectSet> truths{
      {"i0", {gt({0, 0, 20, 20}, 0), gt({50, 50, 110, 110}, 1)}},
      {"i1", {gt({10, 10, 130, 130}, 0)}},
      {"i2", {gt({5, 5, 25, 30}, 1), gt({100, 100, 140, 140}, 0)}},
      {"i3", {}},
  };
  std::vector<ObjectSet> dets{
      {"i0", {det({0, 0, 20, 20}, 0.95, 0), det({1, 1, 20, 20}, 0.9, 0), det({52, 50, 110, 115}, 0.6, 1)}},
      {"i1", {det({10, 10, 100, 130}, 0.8, 0), det({10, 10, 130, 130}, 0.3, 1)}},
      {"i2", {det({5, 5, 25, 30}, 0.7, 0)}},
      {"i3", {det({0, 0, 30, 30}, 0.4, 1)}},
  };
  const auto got = coco_report(dets, truths, 2);
  const auto want = testing::coco_oracle::report(dets, truths, 2);
  EXPECT_LE(testing::max_metric_gap(got, want), kOracleTolerance);
  EXPECT_EQ(got.image_count, 4u);
  EXPECT_EQ(got.object_count[0], 5u);
  // operating point: 0.95, 0.9, 0.6, 0.8, 0.7 kept; hits i0/0, i0/1 and i1/0
  EXPECT_DOUBLE_EQ(got.precision, 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(got.recall, 3.0 / 5.0);
}

TEST(CocoReport, MatchesBruteForceOnRandomMicroDatasets) {
  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = testing::random_micro_dataset(rng);
    const auto got = coco_report(m.detections, m.truths, m.classes);
    const auto want = testing::coco_oracle::report(m.detections, m.truths, m.classes);
    EXPECT_LE(testing::max_metric_gap(got, want), kOracleTolerance) << "trial " << trial;
    for (const auto& [name, value] : got.metrics()) {
      EXPECT_TRUE(value == kUndefined || (value >= 0 && value <= 1)) << name << "=" << value;
    }
    const double pr = got.precision + got.recall;
    EXPECT_DOUBLE_EQ(got.f1, pr > 0 ? 2 * got.precision * got.recall / pr : 0.0);
  }
}

TEST(CocoReport, RejectsMisalignedInputs) {
  EXPECT_THROW(coco_report({{"a", {}}}, {}, 1), ValidationError);
}

TEST(EvalReport, JsonAndCsvRoundTrip) {
  Rng rng(5);
  const auto m = testing::random_micro_dataset(rng);
  const auto r = coco_report(m.detections, m.truths, m.classes);
  const auto back = report_from_json(to_json(r));
  EXPECT_EQ(testing::max_metric_gap(r, back), 0.0);
  EXPECT_EQ(back.class_ap, r.class_ap);
  EXPECT_EQ(back.object_count, r.object_count);
  EXPECT_EQ(to_json(back), to_json(r));
  const auto header = csv_header();
  const auto row = csv_row("run", r);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_THROW(report_from_json("{}"), ParseError);
}

EvalReport with_map(double v) {
  EvalReport r;
  r.map_50_95 = v;
  return r;
}

TEST(CompareRuns, FlagsBestAndEmitsRadarSeries) {
  const auto single = compare_runs({{"only", with_map(0.3)}});
  EXPECT_EQ(single.series_count(), 1u);
  EXPECT_EQ(single.best_label, "only");

  const auto pair = compare_runs({{"baseline", with_map(0.3)}, {"student", with_map(0.4)}});
  EXPECT_EQ(pair.best_label, "student");
  EXPECT_NE(pair.table().find("student"), std::string::npos);

  std::vector<std::pair<std::string, EvalReport>> many;
  for (const char* arch : {"a", "b", "c", "d", "e"}) {
    many.push_back({std::string(arch) + "_baseline", with_map(0.1)});
    many.push_back({std::string(arch) + "_student", with_map(0.2)});
  }
  const auto cmp = compare_runs(many);
  EXPECT_EQ(cmp.series_count(), 10u);
  const auto csv = cmp.radar_csv();
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(rows, 1 + 10 * static_cast<long>(EvalReport{}.metrics().size()));
}

}  // namespace
}  // namespace lupidet::eval
