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

// COCO-style detection metrics (101-point interpolated AP over IoU
// thresholds 0.50:0.05:0.95, scale buckets, mAR@{1,10,100}) plus P/R/F1 at
// a fixed operating point.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lupidet/types.hpp"

namespace lupidet::eval {

/// Sentinel for metrics with no ground truth to measure against.
inline constexpr double kUndefined = -1.0;

/// The ten COCO IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

/// Greedy score-ordered matching of one image's detections to its truths.
struct MatchResult {
  std::vector<double> thresholds;
  // [threshold][detection] -> matched truth index or -1 (detections in input order)
  std::vector<std::vector<int>> detection_match;
  // [threshold][truth] -> matching detection index or -1
  std::vector<std::vector<int>> truth_match;

  bool true_positive(std::size_t t, std::size_t det) const { return detection_match[t][det] >= 0; }
  std::size_t false_negatives(std::size_t t) const;
};

/// For each threshold, detections in descending score order each claim the
/// unclaimed same-class truth of highest IoU (>= threshold).
MatchResult match(const ObjectSet& detections, const ObjectSet& truths,
                  const std::vector<double>& iou_thresholds);

/// Per-detection outcome pooled over a dataset for one class and threshold.
struct ScoredOutcome {
  double score = 0;
  bool true_positive = false;
};

/// 101-point interpolated AP. Outcomes must be given in the order used to
/// break score ties (stable descending sort is applied). Returns kUndefined
/// when num_truths == 0.
double average_precision(std::vector<ScoredOutcome> outcomes, std::size_t num_truths);

enum class ScaleBucket { kAll = 0, kSmall = 1, kMedium = 2, kLarge = 3 };

/// COCO area bands in pixels^2: small [0,32^2), medium [32^2,96^2), large [96^2,inf).
ScaleBucket bucket_of(double area);

struct EvalReport {
  double map_50_95 = kUndefined;
  double map_50 = kUndefined;
  double map_75 = kUndefined;
  double map_small = kUndefined;
  double map_medium = kUndefined;
  double map_large = kUndefined;
  double mar_1 = kUndefined;
  double mar_10 = kUndefined;
  double mar_100 = kUndefined;
  double mar_small = kUndefined;
  double mar_medium = kUndefined;
  double mar_large = kUndefined;
  double precision = 0;  // score >= 0.5, IoU >= 0.5
  double recall = 0;
  double f1 = 0;

  std::vector<double> class_ap;     // AP@[.5:.95] per class, kUndefined if absent
  std::vector<double> class_ap_50;  // AP@.5 per class
  std::size_t image_count = 0;
  std::size_t detection_count = 0;
  std::array<std::size_t, 4> object_count{};  // indexed by ScaleBucket
  std::array<std::size_t, 4> images_with_objects{};

  /// Metric name -> value, in table order.
  std::vector<std::pair<std::string, double>> metrics() const;
};

struct ReportOptions {
  double score_threshold = 0.5;
  double iou_threshold = 0.5;
};

/// Detections and truths are paired by position; detections carry scores.
EvalReport coco_report(const std::vector<ObjectSet>& detections, const std::vector<ObjectSet>& truths,
                       int class_count, const ReportOptions& options = {});

std::string to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string csv_header();
std::string csv_row(const std::string& label, const EvalReport& report);

/// Two-decimal rendering with "–" for undefined metrics.
std::string format_metric(double value);

struct Comparison {
  std::vector<std::pair<std::string, EvalReport>> runs;
  std::string best_label;  // highest map_50_95

  /// Aligned text table, one row per run, best run starred.
  std::string table() const;
  /// CSV with one row per (run, metric, value).
  std::string radar_csv() const;
  std::size_t series_count() const { return runs.size(); }
};

Comparison compare_runs(std::vector<std::pair<std::string, EvalReport>> reports);

}  // namespace lupidet::eval
