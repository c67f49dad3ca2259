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
#include "lupidet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lupidet/error.hpp"

namespace lupidet::eval {
namespace {

constexpr std::array<int, 3> kMaxDets = {1, 10, 100};
constexpr int kRecallPoints = 101;

std::vector<std::size_t> score_order(const ObjectSet& dets) {
  std::vector<std::size_t> order(dets.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets.objects[a].score.value_or(0.0) > dets.objects[b].score.value_or(0.0);
  });
  return order;
}

bool in_bucket(double area, ScaleBucket bucket) {
  return bucket == ScaleBucket::kAll || bucket_of(area) == bucket;
}

double mean_defined(const std::vector<double>& values) {
  double sum = 0;
  int n = 0;
  for (double v : values) {
    if (v > kUndefined) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? kUndefined : sum / n;
}

// Detections of one image ranked by score, capped at the largest maxDet.
struct RankedImage {
  std::vector<std::size_t> order;  // indices into the ObjectSet, rank = position
};

// Outcome of one (image, class, bucket, threshold) evaluation. Detections are
// listed by image rank.
struct CellOutcome {
  std::vector<int> rank;
  std::vector<double> score;
  std::vector<bool> matched;
  std::vector<bool> ignored;
};

// COCO evaluateImg for one image/class/bucket, all thresholds at once.
std::vector<CellOutcome> evaluate_cell(const ObjectSet& dets, const RankedImage& ranked,
                                       const ObjectSet& truths, int cls, ScaleBucket bucket,
                                       const std::vector<double>& thresholds, std::size_t* non_ignored) {
  std::vector<std::size_t> gt;
  std::vector<bool> gt_ignore;
  for (std::size_t g = 0; g < truths.objects.size(); ++g) {
    if (truths.objects[g].label == cls) gt.push_back(g);
  }
  // non-ignored truths first
  std::stable_sort(gt.begin(), gt.end(), [&](std::size_t a, std::size_t b) {
    return in_bucket(truths.objects[a].box.area(), bucket) && !in_bucket(truths.objects[b].box.area(), bucket);
  });
  for (std::size_t g : gt) gt_ignore.push_back(!in_bucket(truths.objects[g].box.area(), bucket));
  *non_ignored = static_cast<std::size_t>(std::count(gt_ignore.begin(), gt_ignore.end(), false));

  std::vector<int> det_rank;
  std::vector<std::size_t> det;
  for (std::size_t r = 0; r < ranked.order.size(); ++r) {
    if (dets.objects[ranked.order[r]].label == cls) {
      det.push_back(ranked.order[r]);
      det_rank.push_back(static_cast<int>(r));
    }
  }

  std::vector<CellOutcome> out(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    CellOutcome& cell = out[t];
    std::vector<int> gt_matched(gt.size(), -1);
    for (std::size_t d = 0; d < det.size(); ++d) {
      const auto& dbox = dets.objects[det[d]].box;
      double best_iou = std::min(thresholds[t], 1 - 1e-10);
      int best = -1;
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (gt_matched[g] >= 0) continue;
        if (best > -1 && !gt_ignore[best] && gt_ignore[g]) break;
        const double v = iou(dbox, truths.objects[gt[g]].box);
        if (v < best_iou) continue;
        best_iou = v;
        best = static_cast<int>(g);
      }
      bool matched = false, ignored = false;
      if (best >= 0) {
        gt_matched[best] = static_cast<int>(d);
        matched = true;
        ignored = gt_ignore[best];
      } else {
        ignored = !in_bucket(dbox.area(), bucket);
      }
      cell.rank.push_back(det_rank[d]);
      cell.score.push_back(dets.objects[det[d]].score.value_or(0.0));
      cell.matched.push_back(matched);
      cell.ignored.push_back(ignored);
    }
  }
  return out;
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

std::size_t MatchResult::false_negatives(std::size_t t) const {
  return static_cast<std::size_t>(std::count(truth_match[t].begin(), truth_match[t].end(), -1));
}

MatchResult match(const ObjectSet& detections, const ObjectSet& truths,
                  const std::vector<double>& iou_thresholds) {
  MatchResult r;
  r.thresholds = iou_thresholds;
  const auto order = score_order(detections);
  for (double t : iou_thresholds) {
    std::vector<int> det_match(detections.objects.size(), -1);
    std::vector<int> truth_match(truths.objects.size(), -1);
    for (std::size_t d : order) {
      const auto& det = detections.objects[d];
      int best = -1;
      double best_iou = t;
      for (std::size_t g = 0; g < truths.objects.size(); ++g) {
        if (truth_match[g] >= 0 || truths.objects[g].label != det.label) continue;
        const double v = iou(det.box, truths.objects[g].box);
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        truth_match[best] = static_cast<int>(d);
        det_match[d] = best;
      }
    }
    r.detection_match.push_back(std::move(det_match));
    r.truth_match.push_back(std::move(truth_match));
  }
  return r;
}

double average_precision(std::vector<ScoredOutcome> outcomes, std::size_t num_truths) {
  if (num_truths == 0) return kUndefined;
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  const std::size_t n = outcomes.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (outcomes[i].true_positive ? tp : fp) += 1;
    recall[i] = tp / static_cast<double>(num_truths);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0;
  for (int k = 0; k < kRecallPoints; ++k) {
    const double threshold = k / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), threshold);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

ScaleBucket bucket_of(double area) {
  if (area < 32.0 * 32.0) return ScaleBucket::kSmall;
  if (area < 96.0 * 96.0) return ScaleBucket::kMedium;
  return ScaleBucket::kLarge;
}

std::vector<std::pair<std::string, double>> EvalReport::metrics() const {
  return {{"map_50_95", map_50_95}, {"map_50", map_50},       {"map_75", map_75},
          {"map_small", map_small}, {"map_medium", map_medium}, {"map_large", map_large},
          {"mar_1", mar_1},         {"mar_10", mar_10},         {"mar_100", mar_100},
          {"mar_small", mar_small}, {"mar_medium", mar_medium}, {"mar_large", mar_large},
          {"precision", precision}, {"recall", recall},         {"f1", f1}};
}

EvalReport coco_report(const std::vector<ObjectSet>& detections, const std::vector<ObjectSet>& truths,
                       int class_count, const ReportOptions& options) {
  if (detections.size() != truths.size()) {
    throw ValidationError("detections and truths must cover the same images");
  }
  const auto thresholds = coco_iou_thresholds();
  const std::size_t T = thresholds.size();
  const std::size_t n_images = truths.size();
  constexpr std::array<ScaleBucket, 4> buckets = {ScaleBucket::kAll, ScaleBucket::kSmall,
                                                  ScaleBucket::kMedium, ScaleBucket::kLarge};

  EvalReport report;
  report.image_count = n_images;
  for (std::size_t i = 0; i < n_images; ++i) {
    report.detection_count += detections[i].objects.size();
    std::array<bool, 4> seen{};
    for (const auto& o : truths[i].objects) {
      const auto b = static_cast<std::size_t>(bucket_of(o.box.area()));
      ++report.object_count[0];
      ++report.object_count[b];
      seen[0] = seen[b] = true;
    }
    for (std::size_t b = 0; b < 4; ++b) report.images_with_objects[b] += seen[b];
  }

  std::vector<RankedImage> ranked(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    auto order = score_order(detections[i]);
    if (order.size() > static_cast<std::size_t>(kMaxDets.back())) order.resize(kMaxDets.back());
    ranked[i].order = std::move(order);
  }

  // ap[bucket][threshold][class] at maxDet 100; rec[bucket][maxDet][threshold][class]
  std::vector<std::vector<std::vector<double>>> ap(4, std::vector<std::vector<double>>(T, std::vector<double>(class_count, kUndefined)));
  std::vector<std::vector<std::vector<std::vector<double>>>> rec(
      4, std::vector<std::vector<std::vector<double>>>(
             kMaxDets.size(), std::vector<std::vector<double>>(T, std::vector<double>(class_count, kUndefined))));

  for (std::size_t b = 0; b < buckets.size(); ++b) {
    for (int k = 0; k < class_count; ++k) {
      std::size_t num_truths = 0;
      std::vector<std::vector<CellOutcome>> cells(n_images);
      for (std::size_t i = 0; i < n_images; ++i) {
        std::size_t n = 0;
        cells[i] = evaluate_cell(detections[i], ranked[i], truths[i], k, buckets[b], thresholds, &n);
        num_truths += n;
      }
      if (num_truths == 0) continue;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t m = 0; m < kMaxDets.size(); ++m) {
          std::vector<ScoredOutcome> outcomes;
          std::size_t tp = 0;
          for (std::size_t i = 0; i < n_images; ++i) {
            const CellOutcome& c = cells[i][t];
            for (std::size_t d = 0; d < c.rank.size(); ++d) {
              if (c.rank[d] >= kMaxDets[m] || c.ignored[d]) continue;
              outcomes.push_back({c.score[d], static_cast<bool>(c.matched[d])});
              tp += c.matched[d];
            }
          }
          rec[b][m][t][k] = static_cast<double>(tp) / static_cast<double>(num_truths);
          if (kMaxDets[m] == kMaxDets.back()) ap[b][t][k] = average_precision(std::move(outcomes), num_truths);
        }
      }
    }
  }

  auto flatten_mean = [&](const std::vector<std::vector<double>>& grid, std::optional<std::size_t> only_t) {
    std::vector<double> values;
    for (std::size_t t = 0; t < T; ++t) {
      if (only_t && *only_t != t) continue;
      values.insert(values.end(), grid[t].begin(), grid[t].end());
    }
    return mean_defined(values);
  };
  const std::size_t t50 = 0, t75 = 5;
  constexpr std::size_t kAll = 0, kSmall = 1, kMedium = 2, kLarge = 3, kMax = 2;
  report.map_50_95 = flatten_mean(ap[kAll], std::nullopt);
  report.map_50 = flatten_mean(ap[kAll], t50);
  report.map_75 = flatten_mean(ap[kAll], t75);
  report.map_small = flatten_mean(ap[kSmall], std::nullopt);
  report.map_medium = flatten_mean(ap[kMedium], std::nullopt);
  report.map_large = flatten_mean(ap[kLarge], std::nullopt);
  report.mar_1 = flatten_mean(rec[kAll][0], std::nullopt);
  report.mar_10 = flatten_mean(rec[kAll][1], std::nullopt);
  report.mar_100 = flatten_mean(rec[kAll][kMax], std::nullopt);
  report.mar_small = flatten_mean(rec[kSmall][kMax], std::nullopt);
  report.mar_medium = flatten_mean(rec[kMedium][kMax], std::nullopt);
  report.mar_large = flatten_mean(rec[kLarge][kMax], std::nullopt);

  report.class_ap.assign(class_count, kUndefined);
  report.class_ap_50.assign(class_count, kUndefined);
  for (int k = 0; k < class_count; ++k) {
    std::vector<double> per_t;
    for (std::size_t t = 0; t < T; ++t) per_t.push_back(ap[kAll][t][k]);
    report.class_ap[k] = mean_defined(per_t);
    report.class_ap_50[k] = ap[kAll][t50][k];
  }

  // operating-point P/R/F1
  std::size_t tp = 0, n_dets = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    ObjectSet kept{detections[i].image_id, {}};
    for (const auto& o : detections[i].objects) {
      if (o.score.value_or(0.0) >= options.score_threshold) kept.objects.push_back(o);
    }
    n_dets += kept.objects.size();
    const auto m = match(kept, truths[i], {options.iou_threshold});
    for (int g : m.truth_match[0]) tp += g >= 0;
  }
  const std::size_t n_truths = report.object_count[0];
  report.precision = n_dets ? static_cast<double>(tp) / static_cast<double>(n_dets) : 0.0;
  report.recall = n_truths ? static_cast<double>(tp) / static_cast<double>(n_truths) : 0.0;
  const double pr = report.precision + report.recall;
  report.f1 = pr > 0 ? 2 * report.precision * report.recall / pr : 0.0;
  return report;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  for (const auto& [name, value] : r.metrics()) j[name] = value;
  j["class_ap"] = r.class_ap;
  j["class_ap_50"] = r.class_ap_50;
  j["image_count"] = r.image_count;
  j["detection_count"] = r.detection_count;
  j["object_count"] = {{"all", r.object_count[0]},
                       {"small", r.object_count[1]},
                       {"medium", r.object_count[2]},
                       {"large", r.object_count[3]}};
  j["images_with_objects"] = {{"all", r.images_with_objects[0]},
                              {"small", r.images_with_objects[1]},
                              {"medium", r.images_with_objects[2]},
                              {"large", r.images_with_objects[3]}};
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
  EvalReport r;
  auto get = [&](const char* key, double& field) {
    if (!j.contains(key) || !j[key].is_number()) throw ParseError(std::string("eval report: missing ") + key);
    field = j[key].get<double>();
  };
  get("map_50_95", r.map_50_95);
  get("map_50", r.map_50);
  get("map_75", r.map_75);
  get("map_small", r.map_small);
  get("map_medium", r.map_medium);
  get("map_large", r.map_large);
  get("mar_1", r.mar_1);
  get("mar_10", r.mar_10);
  get("mar_100", r.mar_100);
  get("mar_small", r.mar_small);
  get("mar_medium", r.mar_medium);
  get("mar_large", r.mar_large);
  get("precision", r.precision);
  get("recall", r.recall);
  get("f1", r.f1);
  r.class_ap = j.value("class_ap", std::vector<double>{});
  r.class_ap_50 = j.value("class_ap_50", std::vector<double>{});
  r.image_count = j.value("image_count", std::size_t{0});
  r.detection_count = j.value("detection_count", std::size_t{0});
  if (j.contains("object_count")) {
    const auto& oc = j["object_count"];
    r.object_count = {oc.value("all", std::size_t{0}), oc.value("small", std::size_t{0}),
                      oc.value("medium", std::size_t{0}), oc.value("large", std::size_t{0})};
  }
  if (j.contains("images_with_objects")) {
    const auto& ic = j["images_with_objects"];
    r.images_with_objects = {ic.value("all", std::size_t{0}), ic.value("small", std::size_t{0}),
                             ic.value("medium", std::size_t{0}), ic.value("large", std::size_t{0})};
  }
  return r;
}

std::string csv_header() {
  std::string h = "run";
  for (const auto& [name, value] : EvalReport{}.metrics()) h += "," + name;
  return h;
}

std::string csv_row(const std::string& label, const EvalReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << label;
  for (const auto& [name, value] : report.metrics()) os << "," << value;
  return os.str();
}

std::string format_metric(double value) {
  if (value <= kUndefined) return "–";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string Comparison::table() const {
  std::size_t width = 3;
  for (const auto& [label, r] : runs) width = std::max(width, label.size() + 2);
  std::ostringstream os;
  os << std::string(width, ' ');
  for (const auto& [name, v] : EvalReport{}.metrics()) {
    std::string col = name;
    if (col.size() < 10) col.append(10 - col.size(), ' ');
    os << " " << col;
  }
  os << "\n";
  for (const auto& [label, r] : runs) {
    std::string head = (label == best_label ? "*" : " ") + label;
    head.append(width - std::min(width, head.size()), ' ');
    os << head;
    for (const auto& [name, v] : r.metrics()) {
      std::string cell = format_metric(v);
      // "–" is three bytes but one column
      const std::size_t shown = v <= kUndefined ? 1 : cell.size();
      cell.append(10 - std::min<std::size_t>(10, shown), ' ');
      os << " " << cell;
    }
    os << "\n";
  }
  return os.str();
}

std::string Comparison::radar_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "run,metric,value\n";
  for (const auto& [label, r] : runs) {
    for (const auto& [name, v] : r.metrics()) os << label << "," << name << "," << v << "\n";
  }
  return os.str();
}

Comparison compare_runs(std::vector<std::pair<std::string, EvalReport>> reports) {
  if (reports.empty()) throw ValidationError("compare_runs needs at least one report");
  Comparison c;
  c.runs = std::move(reports);
  double best = -2;
  for (const auto& [label, r] : c.runs) {
    if (r.map_50_95 > best) {
      best = r.map_50_95;
      c.best_label = label;
    }
  }
  return c;
}

}  // namespace lupidet::eval
