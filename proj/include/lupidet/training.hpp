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

// Teacher, student and baseline training loops, alpha sweeps and the
// inference helpers they share. Every run is reproducible from its seed:
// model initialization comes from build_detector(seed) and the visiting
// order of epoch e from mix_seed(seed, e).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lupidet/dataset.hpp"
#include "lupidet/detector.hpp"
#include "lupidet/evaluation.hpp"
#include "lupidet/lupi_loss.hpp"

namespace lupidet::train {

enum class Role { kTeacher, kStudent, kBaseline };

std::string to_string(Role role);
Role parse_role(const std::string& name);

/// Quantity watched by early stopping and best-checkpoint selection.
enum class Monitor { kCombined, kDetection };

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;  // Adam, constant
  int early_stop_patience = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  Monitor student_monitor = Monitor::kCombined;  // teachers and baselines always use detection loss

  void validate() const;
};

/// Stops once `patience` consecutive epochs fail to improve on the best
/// value seen. Lower is better.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records one epoch; returns true when training should stop.
  bool update(double value);
  bool last_improved() const { return last_improved_; }
  double best() const { return best_; }
  int epochs_since_best() const { return since_best_; }
  void restore(double best, int epochs_since_best);

 private:
  int patience_;
  double best_;
  int since_best_ = 0;
  bool last_improved_ = false;
};

/// Prepared split: train samples are visited in shuffled order, val samples
/// drive early stopping. Teachers need four channels, students and
/// baselines use the first three.
struct TrainData {
  std::vector<data::PreparedSample> train;
  std::vector<data::PreparedSample> val;
};

/// Where and how a run writes its artifacts. An empty directory keeps the
/// run in memory.
struct RunOptions {
  std::filesystem::path directory;
  std::string run_id;
  bool resume = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_detection = 0;
  double val_distance = 0;
  double val_monitor = 0;
  bool best = false;
};

struct TrainResult {
  detection::DetectorHandle last;
  detection::DetectorHandle best;
  std::vector<EpochRecord> epochs;
  std::vector<lupi::LossBreakdown> steps;
  bool stopped_early = false;
  std::filesystem::path best_checkpoint;  // empty for in-memory runs
};

/// "{architecture}.{role}.{alpha with two decimals, or na}.{epoch}.ckpt"
std::string checkpoint_name(const std::string& architecture_id, Role role, std::optional<double> alpha, int epoch);
/// Marker naming the best checkpoint of a run: the same stem with ".best".
std::string best_marker_name(const std::string& architecture_id, Role role, std::optional<double> alpha);

/// Teacher on stacked image and privileged channels. Every sample must carry
/// four channels; this is checked before the first step.
TrainResult train_teacher(const TrainData& data, detection::DetectorHandle handle, const TrainConfig& cfg,
                          const RunOptions& run = {});

/// RGB-only training without a teacher term.
TrainResult train_baseline(const TrainData& data, detection::DetectorHandle handle, const TrainConfig& cfg,
                           const RunOptions& run = {});

/// Student against a frozen teacher. The teacher must be the four-channel
/// counterpart of the student's architecture and class count; it is run in
/// eval mode without gradients and never modified.
TrainResult train_student(const TrainData& data, const detection::DetectorHandle& teacher,
                          detection::DetectorHandle student, lupi::AlphaWeight alpha, const TrainConfig& cfg,
                          const RunOptions& run = {});
TrainResult train_student(const TrainData& data, const std::filesystem::path& teacher_checkpoint,
                          detection::DetectorHandle student, lupi::AlphaWeight alpha, const TrainConfig& cfg,
                          const RunOptions& run = {});

/// Detections per sample mapped back to the source image frame.
std::vector<ObjectSet> predict(detection::DetectorHandle& handle, const std::vector<data::PreparedSample>& samples,
                               int batch_size = 8, const detection::DecodeOptions& decode = {});

/// COCO-style report of the handle on samples whose truth is compared in
/// the source image frame.
eval::EvalReport evaluate(detection::DetectorHandle& handle, const std::vector<data::PreparedSample>& samples,
                          int batch_size = 8);

/// Truth of each sample in the source image frame.
std::vector<ObjectSet> source_truth(const std::vector<data::PreparedSample>& samples);

struct SweepRow {
  double alpha = 0;
  eval::EvalReport report;
  std::filesystem::path checkpoint;
  bool best = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ascending alpha
  double best_alpha = 0;       // highest AP@[.5:.95]; ties go to the smaller alpha

  /// CSV: alpha, best flag, then every report metric.
  std::string csv() const;
};

/// Trains one student per distinct alpha (duplicates dropped with a
/// warning) from the same seed and data order, then evaluates each best
/// checkpoint on `eval_samples`.
SweepResult sweep_alpha(const TrainData& data, const detection::DetectorHandle& teacher,
                        const std::string& architecture_id, std::vector<double> alphas, const TrainConfig& cfg,
                        const std::vector<data::PreparedSample>& eval_samples, const RunOptions& run = {});

}  // namespace lupidet::train
