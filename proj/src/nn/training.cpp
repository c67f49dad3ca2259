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
#include "lupidet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "lupidet/error.hpp"
#include "lupidet/logging.hpp"
#include "lupidet/rng.hpp"

namespace lupidet::train {
namespace {

using detection::DetectorHandle;
using Clock = std::chrono::steady_clock;

std::string alpha_tag(std::optional<double> alpha) {
  if (!alpha) return "na";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *alpha);
  return buf;
}

std::string run_stem(const std::string& arch, Role role, std::optional<double> alpha) {
  return arch + "." + to_string(role) + "." + alpha_tag(alpha);
}

class JsonlSink {
 public:
  JsonlSink() = default;
  JsonlSink(const std::filesystem::path& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot open log " + path.string());
  }
  void write(const nlohmann::json& record) {
    if (out_.is_open()) out_ << record.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

struct Batch {
  torch::Tensor inputs;
  torch::Tensor teacher_inputs;  // four channels, students only
  std::vector<ObjectSet> targets;
};

Batch make_batch(const std::vector<data::PreparedSample>& samples, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t end, std::int64_t channels, bool with_teacher) {
  std::vector<const data::PreparedSample*> picked;
  Batch b;
  for (std::size_t i = begin; i < end; ++i) {
    picked.push_back(&samples[order[i]]);
    b.targets.push_back(samples[order[i]].truth);
  }
  b.inputs = detection::stack_batch(picked, channels);
  if (with_teacher) b.teacher_inputs = detection::stack_batch(picked, 4);
  return b;
}

void require_channels(const std::vector<data::PreparedSample>& samples, int channels, const std::string& why) {
  std::vector<std::string> missing;
  for (const auto& s : samples) {
    if (s.channels < channels) missing.push_back(s.image_id);
  }
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", " : "") + missing[i];
  if (missing.size() > 5) list += ", ...";
  throw ValidationError(std::to_string(missing.size()) + " sample(s) lack " + why + ": " + list);
}

std::optional<int> latest_epoch(const std::filesystem::path& dir, const std::string& stem) {
  if (dir.empty() || !std::filesystem::exists(dir)) return std::nullopt;
  std::optional<int> latest;
  const std::string prefix = stem + ".";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(prefix, 0) != 0 || entry.path().extension() != ".ckpt") continue;
    const auto middle = name.substr(prefix.size(), name.size() - prefix.size() - 5);
    if (middle.empty() || !std::all_of(middle.begin(), middle.end(), ::isdigit)) continue;
    const int epoch = std::stoi(middle);
    if (!latest || epoch > *latest) latest = epoch;
  }
  return latest;
}

struct Loop {
  Role role;
  const TrainData& data;
  DetectorHandle model;
  std::optional<DetectorHandle> teacher;
  std::optional<lupi::AlphaWeight> alpha;
  const TrainConfig& cfg;
  const RunOptions& run;

  std::int64_t channels() const { return role == Role::kTeacher ? 4 : 3; }
  double alpha_value() const { return alpha ? alpha->value() : 0.0; }
  bool monitors_combined() const { return role == Role::kStudent && cfg.student_monitor == Monitor::kCombined; }

  // Detection loss and distance of one batch; the combined loss keeps the graph.
  std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> losses(const Batch& b) {
    auto out = model.forward_with_tap(b.inputs, &b.targets);
    auto det = detection::total_loss(out.losses);
    if (role != Role::kStudent) return {det, torch::zeros({}), det};
    torch::Tensor reference;
    {
      torch::NoGradGuard no_grad;
      reference = teacher->module().features(b.teacher_inputs);
    }
    auto dist = lupi::batch_cosine_distance(out.features, reference);
    return {det, dist, lupi::combine(det, dist, *alpha)};
  }

  TrainResult execute() {
    cfg.validate();
    if (data.train.empty()) throw ValidationError("no training samples");
    if (role == Role::kTeacher) {
      require_channels(data.train, 4, "a privileged raster");
      require_channels(data.val, 4, "a privileged raster");
      if (model.input_channels() != 4) throw ValidationError("teacher detector must take four input channels");
    } else {
      if (model.input_channels() != 3) throw ValidationError("student and baseline detectors take three channels");
    }
    if (role == Role::kStudent) {
      require_channels(data.train, 4, "a privileged raster for the teacher");
      require_channels(data.val, 4, "a privileged raster for the teacher");
      teacher->eval();
    }

    at::globalContext().setDeterministicAlgorithms(true, false);
    const std::optional<double> tag = role == Role::kStudent ? std::optional<double>(alpha_value()) : std::nullopt;
    const std::string stem = run_stem(model.architecture_id(), role, tag);
    const bool on_disk = !run.directory.empty();
    const std::string run_id = run.run_id.empty() ? stem + ".s" + std::to_string(cfg.seed) : run.run_id;

    std::vector<torch::Tensor> params;
    for (auto& p : model.module().parameters()) {
      if (p.requires_grad()) params.push_back(p);
    }
    torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.learning_rate));

    EarlyStopping stopper(cfg.early_stop_patience);
    TrainResult result;
    int start = 1;
    if (on_disk) std::filesystem::create_directories(run.directory);
    if (on_disk && run.resume) {
      if (auto last = latest_epoch(run.directory, stem)) {
        auto info = detection::load_checkpoint(run.directory / checkpoint_name(model.architecture_id(), role, tag, *last),
                                               model, &optimizer);
        start = static_cast<int>(info.epoch) + 1;
        stopper.restore(info.best_metric, static_cast<int>(info.epochs_since_best));
        const auto marker = run.directory / best_marker_name(model.architecture_id(), role, tag);
        if (std::filesystem::exists(marker)) {
          std::ifstream in(marker);
          std::string name;
          std::getline(in, name);
          result.best = model.clone();
          detection::load_checkpoint(run.directory / name, result.best);
          result.best_checkpoint = run.directory / name;
        }
        log::info("resuming " + run_id + " at epoch " + std::to_string(start));
      }
    }
    JsonlSink steps, epochs;
    if (on_disk) {
      steps = JsonlSink(run.directory / "steps.jsonl", start > 1);
      epochs = JsonlSink(run.directory / "epochs.jsonl", start > 1);
    }

    const auto t0 = Clock::now();
    const bool with_teacher = role == Role::kStudent;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::int64_t step = 0;
    for (int epoch = start; epoch <= cfg.epochs; ++epoch) {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
      const auto order = rng.permutation(data.train.size());
      model.train();
      double train_sum = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += bs) {
        const auto end = std::min(order.size(), begin + bs);
        auto batch = make_batch(data.train, order, begin, end, channels(), with_teacher);
        auto [det, dist, combined] = losses(batch);
        optimizer.zero_grad();
        combined.backward();
        optimizer.step();
        ++step;
        auto record = lupi::lupi_loss(std::max(0.0, det.item<double>()), dist.item<double>(),
                                      lupi::AlphaWeight(alpha_value()), epoch, step);
        train_sum += record.combined * static_cast<double>(end - begin);
        steps.write({{"run_id", run_id},
                     {"epoch", epoch},
                     {"step", step},
                     {"det_loss", record.detection_loss},
                     {"distill_distance", record.distill_distance},
                     {"alpha", record.alpha.value()},
                     {"combined", record.combined},
                     {"lr", cfg.learning_rate},
                     {"wall_time", std::chrono::duration<double>(Clock::now() - t0).count()}});
        result.steps.push_back(record);
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = train_sum / static_cast<double>(order.size());
      validate(rec);
      const bool stop = stopper.update(rec.val_monitor);
      rec.best = stopper.last_improved();
      if (rec.best) result.best = model.clone();
      if (on_disk) {
        detection::CheckpointInfo info;
        info.epoch = epoch;
        info.best_metric = stopper.best();
        info.epochs_since_best = stopper.epochs_since_best();
        info.role = to_string(role);
        info.alpha = alpha_value();
        info.seed = cfg.seed;
        const auto name = checkpoint_name(model.architecture_id(), role, tag, epoch);
        detection::save_checkpoint(run.directory / name, model, info, &optimizer);
        if (rec.best) {
          std::ofstream(run.directory / best_marker_name(model.architecture_id(), role, tag)) << name << '\n';
          result.best_checkpoint = run.directory / name;
        }
      }
      epochs.write({{"run_id", run_id},
                    {"epoch", epoch},
                    {"train_loss", rec.train_loss},
                    {"val_det_loss", rec.val_detection},
                    {"val_distill_distance", rec.val_distance},
                    {"val_monitor", rec.val_monitor},
                    {"best", rec.best},
                    {"wall_time", std::chrono::duration<double>(Clock::now() - t0).count()}});
      result.epochs.push_back(rec);
      if (stop) {
        result.stopped_early = epoch < cfg.epochs;
        break;
      }
    }
    result.last = model;
    if (!result.best.valid()) result.best = model.clone();
    return result;
  }

  // Losses on the validation set, or on the training set when there is none.
  // Evaluated with the training-mode graph (no layer here behaves differently
  // between modes except proposal counts) under no_grad.
  void validate(EpochRecord& rec) {
    const auto& samples = data.val.empty() ? data.train : data.val;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    torch::NoGradGuard no_grad;
    double det_sum = 0, dist_sum = 0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const auto end = std::min(order.size(), begin + bs);
      auto batch = make_batch(samples, order, begin, end, channels(), role == Role::kStudent);
      auto [det, dist, combined] = losses(batch);
      det_sum += det.item<double>() * static_cast<double>(end - begin);
      dist_sum += dist.item<double>() * static_cast<double>(end - begin);
    }
    const double n = static_cast<double>(samples.size());
    rec.val_detection = det_sum / n;
    rec.val_distance = dist_sum / n;
    const double a = alpha_value();
    rec.val_monitor = monitors_combined() ? (1 - a) * rec.val_detection + a * rec.val_distance : rec.val_detection;
  }
};

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::kTeacher:
      return "teacher";
    case Role::kStudent:
      return "student";
    case Role::kBaseline:
      return "baseline";
  }
  return "unknown";
}

Role parse_role(const std::string& name) {
  if (name == "teacher") return Role::kTeacher;
  if (name == "student") return Role::kStudent;
  if (name == "baseline") return Role::kBaseline;
  throw ValidationError("unknown role '" + name + "' (expected teacher, student or baseline)");
}

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  if (epochs < 1) errors.push_back("epochs must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) errors.push_back("learning_rate must be positive");
  if (early_stop_patience < 1) errors.push_back("early_stop_patience must be at least 1");
  if (batch_size < 1) errors.push_back("batch_size must be at least 1");
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
  throw ValidationError(msg);
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ValidationError("patience must be at least 1");
}

bool EarlyStopping::update(double value) {
  last_improved_ = value < best_;
  if (last_improved_) {
    best_ = value;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

void EarlyStopping::restore(double best, int epochs_since_best) {
  best_ = best;
  since_best_ = epochs_since_best;
  last_improved_ = false;
}

std::string checkpoint_name(const std::string& architecture_id, Role role, std::optional<double> alpha, int epoch) {
  return run_stem(architecture_id, role, alpha) + "." + std::to_string(epoch) + ".ckpt";
}

std::string best_marker_name(const std::string& architecture_id, Role role, std::optional<double> alpha) {
  return run_stem(architecture_id, role, alpha) + ".best";
}

TrainResult train_teacher(const TrainData& data, DetectorHandle handle, const TrainConfig& cfg,
                          const RunOptions& run) {
  return Loop{Role::kTeacher, data, std::move(handle), std::nullopt, std::nullopt, cfg, run}.execute();
}

TrainResult train_baseline(const TrainData& data, DetectorHandle handle, const TrainConfig& cfg,
                           const RunOptions& run) {
  return Loop{Role::kBaseline, data, std::move(handle), std::nullopt, std::nullopt, cfg, run}.execute();
}

TrainResult train_student(const TrainData& data, const DetectorHandle& teacher, DetectorHandle student,
                          lupi::AlphaWeight alpha, const TrainConfig& cfg, const RunOptions& run) {
  if (!teacher.valid() || !student.valid()) throw ValidationError("teacher and student detectors are required");
  if (teacher.input_channels() != 4) throw ValidationError("teacher must take four input channels");
  if (teacher.architecture_id() != student.architecture_id()) {
    throw ValidationError("teacher architecture " + teacher.architecture_id() + " does not match student " +
                          student.architecture_id());
  }
  if (teacher.class_count() != student.class_count()) {
    throw ValidationError("teacher and student class counts differ");
  }
  return Loop{Role::kStudent, data, std::move(student), teacher, alpha, cfg, run}.execute();
}

TrainResult train_student(const TrainData& data, const std::filesystem::path& teacher_checkpoint,
                          DetectorHandle student, lupi::AlphaWeight alpha, const TrainConfig& cfg,
                          const RunOptions& run) {
  auto teacher = detection::load_detector(teacher_checkpoint);
  return train_student(data, teacher, std::move(student), alpha, cfg, run);
}

std::vector<ObjectSet> predict(DetectorHandle& handle, const std::vector<data::PreparedSample>& samples,
                               int batch_size, const detection::DecodeOptions& decode) {
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  handle.eval();
  torch::NoGradGuard no_grad;
  std::vector<ObjectSet> out;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += bs) {
    const auto end = std::min(order.size(), begin + bs);
    auto batch = make_batch(samples, order, begin, end, handle.input_channels(), false);
    auto result = handle.forward_with_tap(batch.inputs, nullptr, decode);
    for (std::size_t i = begin; i < end; ++i) {
      auto set = samples[i].transform.to_image(result.detections[i - begin]);
      set.image_id = samples[i].image_id;
      out.push_back(std::move(set));
    }
  }
  return out;
}

std::vector<ObjectSet> source_truth(const std::vector<data::PreparedSample>& samples) {
  std::vector<ObjectSet> out;
  for (const auto& s : samples) {
    auto set = s.transform.to_image(s.truth);
    set.image_id = s.image_id;
    out.push_back(std::move(set));
  }
  return out;
}

eval::EvalReport evaluate(DetectorHandle& handle, const std::vector<data::PreparedSample>& samples, int batch_size) {
  return eval::coco_report(predict(handle, samples, batch_size), source_truth(samples),
                           static_cast<int>(handle.class_count()));
}

std::string SweepResult::csv() const {
  std::string out = "alpha,best," + eval::csv_header().substr(4) + "\n";
  for (const auto& row : rows) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "%.2f,%d", row.alpha, row.best ? 1 : 0);
    out += eval::csv_row(tag, row.report) + "\n";
  }
  return out;
}

SweepResult sweep_alpha(const TrainData& data, const DetectorHandle& teacher, const std::string& architecture_id,
                        std::vector<double> alphas, const TrainConfig& cfg,
                        const std::vector<data::PreparedSample>& eval_samples, const RunOptions& run) {
  if (alphas.empty()) throw ValidationError("alpha list is empty");
  for (double a : alphas) lupi::AlphaWeight{a};
  const auto given = alphas.size();
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  if (alphas.size() != given) {
    log::warn("dropped " + std::to_string(given - alphas.size()) + " duplicate alpha value(s)");
  }
  SweepResult result;
  std::size_t best = 0;
  for (double a : alphas) {
    auto student = detection::build_detector(architecture_id, teacher.class_count(), false, cfg.seed);
    RunOptions sub = run;
    if (!run.directory.empty()) sub.directory = run.directory / ("alpha_" + alpha_tag(a));
    sub.run_id = run.run_id.empty() ? "" : run.run_id + ".alpha_" + alpha_tag(a);
    auto trained = train_student(data, teacher, std::move(student), lupi::AlphaWeight(a), cfg, sub);
    SweepRow row;
    row.alpha = a;
    row.report = evaluate(trained.best, eval_samples);
    row.checkpoint = trained.best_checkpoint;
    result.rows.push_back(std::move(row));
    if (result.rows.back().report.map_50_95 > result.rows[best].report.map_50_95) best = result.rows.size() - 1;
  }
  result.rows[best].best = true;
  result.best_alpha = result.rows[best].alpha;
  return result;
}

}  // namespace lupidet::train
