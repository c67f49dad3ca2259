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
#include "lupidet/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/interpretability.hpp"
#include "lupidet/logging.hpp"
#include "lupidet/privileged.hpp"
#include "lupidet/synthetic.hpp"

namespace lupidet::cli {
namespace {

namespace fs = std::filesystem;

fs::path data_dir(const RunConfig& cfg) { return cfg.output_dir / "data"; }

std::string alpha_text(double a) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", a);
  return buf;
}

privileged::MaskSpec mask_spec(const RunConfig& cfg, int classes) {
  if (cfg.privileged.intensity_map.empty()) return privileged::default_mask_spec(classes);
  if (static_cast<int>(cfg.privileged.intensity_map.size()) != classes) {
    throw ValidationError("privileged.intensity_map: has " + std::to_string(cfg.privileged.intensity_map.size()) +
                          " entries, dataset has " + std::to_string(classes) + " classes");
  }
  privileged::MaskSpec spec;
  for (int v : cfg.privileged.intensity_map) spec.intensity.push_back(static_cast<std::uint8_t>(v));
  spec.validate();
  return spec;
}

// Source-resolution privileged raster for external and fusion modes.
ImageRaster source_raster(const RunConfig& cfg, const DatasetTriplet& t, const privileged::MaskSpec& spec) {
  const auto& pb = cfg.privileged;
  std::vector<ImageRaster> rasters;
  privileged::FusionSpec fusion;
  for (const auto& s : pb.sources) {
    if (s.role == "mask") {
      rasters.push_back(privileged::render_bbox_mask(t.truth, t.image.height(), t.image.width(), spec));
    } else {
      rasters.push_back(privileged::ingest_raster(s.dir / (t.id() + ".png"), t.image.height(), t.image.width()));
    }
    fusion.sources.push_back(privileged::parse_role(s.role));
  }
  if (pb.mode == "external") return rasters.front();
  fusion.weights = pb.weights;
  return privileged::fuse(rasters, fusion);
}

struct Loaded {
  std::vector<DatasetTriplet> triplets;
  LabelMap labels;
  std::optional<data::Split> fixed_split;
};

Loaded ingest(const RunConfig& cfg) {
  const auto& ds = cfg.dataset;
  Loaded l;
  if (ds.format == "synthetic") {
    const auto spec = synth::acceptance_spec(ds.synthetic_seed);
    l.labels = synth::label_map(spec);
    if (ds.synthetic_images == 0) {
      l.fixed_split = synth::make_acceptance_suite(ds.synthetic_seed);
    } else {
      l.triplets = synth::generate(spec, ds.synthetic_images);
    }
    return l;
  }
  auto result = ds.format == "coco" ? data::ingest_coco(ds.annotations, ds.image_root)
                                    : data::ingest_voc(ds.xml_dir, ds.image_root, ds.class_names);
  l.triplets = std::move(result.triplets);
  l.labels = std::move(result.labels);
  return l;
}

std::vector<DatasetTriplet> with_privileged(const RunConfig& cfg, std::vector<DatasetTriplet> triplets,
                                            const privileged::MaskSpec& spec) {
  const bool tiled = cfg.dataset.tiling.rows * cfg.dataset.tiling.cols > 1;
  std::vector<DatasetTriplet> out;
  for (auto& t : triplets) {
    if (cfg.privileged.mode != "bbox_mask") t.privileged = source_raster(cfg, t, spec);
    auto children = tiled ? data::tile(t, cfg.dataset.tiling) : std::vector<DatasetTriplet>{std::move(t)};
    for (auto& c : children) {
      if (cfg.privileged.mode == "bbox_mask") {
        c.privileged = privileged::render_bbox_mask(c.truth, c.image.height(), c.image.width(), spec);
      }
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::string checkpoint_label(const fs::path& path) {
  auto name = path.filename().string();
  if (name.size() > 5 && name.ends_with(".ckpt")) name.resize(name.size() - 5);
  return name;
}

std::string cam_label(const detection::CheckpointInfo& info) {
  if (info.role == "student") return "student-a" + alpha_text(info.alpha);
  return info.role.empty() ? "model" : info.role;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::vector<fs::path> require_checkpoints(const std::vector<fs::path>& checkpoints) {
  if (checkpoints.empty()) throw ValidationError("at least one --checkpoint is required");
  for (const auto& c : checkpoints) {
    if (!fs::exists(c)) throw ValidationError("checkpoint not found: " + c.string());
  }
  return checkpoints;
}

}  // namespace

RunConfig load_config(const fs::path& path, const Overrides& o) {
  auto cfg = RunConfig::load(path);
  if (o.seed) cfg.train.config.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.alpha) cfg.train.alpha = *o.alpha;
  if (o.epochs) cfg.train.config.epochs = *o.epochs;
  cfg.validate();
  return cfg;
}

PrepareSummary cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  auto loaded = ingest(cfg);
  const int classes = loaded.labels.class_count();
  const auto spec = mask_spec(cfg, classes);

  data::Split split;
  if (loaded.fixed_split) {
    split.train = with_privileged(cfg, std::move(loaded.fixed_split->train), spec);
    split.val = with_privileged(cfg, std::move(loaded.fixed_split->val), spec);
    split.test = with_privileged(cfg, std::move(loaded.fixed_split->test), spec);
  } else {
    split = data::split(with_privileged(cfg, std::move(loaded.triplets), spec), cfg.dataset.split, cfg.dataset.seed);
  }

  PrepareSummary s;
  s.objects_per_class.assign(static_cast<std::size_t>(classes), 0);
  const auto dir = data_dir(cfg);
  std::vector<DatasetTriplet> all;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& t : *part) {
      s.files_changed += io::write_if_changed(dir / "images" / (t.id() + ".png"), io::encode_png(t.image));
      s.files_changed += io::write_if_changed(dir / "privileged" / privileged::mask_filename(t.id()),
                                              io::encode_png(*t.privileged));
      ++s.images;
      ++s.masks;
      for (const auto& o : t.truth.objects) ++s.objects_per_class[static_cast<std::size_t>(o.label)];
      all.push_back(t);
    }
  }
  s.files_changed += io::write_if_changed(dir / "annotations.json", data::coco_json(all, loaded.labels));
  s.files_changed += data::write_split_manifest(dir / "splits", split);
  s.train = split.train.size();
  s.val = split.val.size();
  s.test = split.test.size();

  out << "images: " << s.images << " (train " << s.train << ", val " << s.val << ", test " << s.test << ")\n";
  out << "privileged rasters: " << s.masks << " (" << cfg.privileged.mode << ")\n";
  for (int c = 0; c < classes; ++c) {
    out << "  " << loaded.labels.names[static_cast<std::size_t>(c)] << ": "
        << s.objects_per_class[static_cast<std::size_t>(c)] << " objects\n";
  }
  out << s.files_changed << " files changed\n";
  return s;
}

const std::vector<DatasetTriplet>& PreparedDataset::part(const std::string& name) const {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ValidationError("unknown split '" + name + "'");
}

PreparedDataset load_prepared(const RunConfig& cfg) {
  const auto dir = data_dir(cfg);
  if (!fs::exists(dir / "annotations.json") || !fs::exists(dir / "splits")) {
    throw ValidationError("no prepared dataset under " + dir.string() + "; run prepare first");
  }
  auto ingested = data::ingest_coco(dir / "annotations.json", dir / "images");
  std::map<std::string, DatasetTriplet> by_id;
  for (auto& t : ingested.triplets) {
    const auto path = dir / "privileged" / privileged::mask_filename(t.id());
    if (fs::exists(path)) t.privileged = privileged::ingest_raster(path, t.image.height(), t.image.width());
    by_id.emplace(t.id(), std::move(t));
  }
  const auto manifest = data::read_split_manifest(dir / "splits");
  PreparedDataset p;
  p.labels = ingested.labels;
  auto fill = [&](const std::vector<std::string>& ids, std::vector<DatasetTriplet>& dst) {
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ParseError("split manifest names unknown image " + id);
      dst.push_back(it->second);
    }
  };
  fill(manifest.train, p.split.train);
  fill(manifest.val, p.split.val);
  fill(manifest.test, p.split.test);
  return p;
}

std::vector<data::PreparedSample> preprocess_all(const std::vector<DatasetTriplet>& triplets, int target_size) {
  data::PreprocessConfig pc;
  pc.target_size = target_size;
  std::vector<data::PreparedSample> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) out.push_back(data::preprocess(t, pc));
  return out;
}

std::string run_id(train::Role role, const std::string& architecture_id, std::optional<double> alpha,
                   std::uint64_t seed) {
  return train::to_string(role) + "_" + architecture_id + "_" + (alpha ? alpha_text(*alpha) : "na") + "_s" +
         std::to_string(seed);
}

fs::path cmd_train(const RunConfig& cfg, train::Role role, bool resume, std::ostream& out) {
  const auto& tc = cfg.train.config;
  std::optional<double> alpha;
  if (role == train::Role::kStudent) {
    if (cfg.train.teacher_checkpoint.empty()) {
      throw ValidationError("train.teacher_checkpoint: required for the student role");
    }
    if (!cfg.train.alpha) throw ValidationError("train.alpha: required for the student role (or pass --alpha)");
    alpha = cfg.train.alpha;
    const auto info = detection::read_checkpoint_info(cfg.train.teacher_checkpoint);
    if (info.input_channels != 4 || info.architecture_id != cfg.model.architecture_id) {
      throw ValidationError("train.teacher_checkpoint: expected a four-channel " + cfg.model.architecture_id +
                            " teacher, found " + std::to_string(info.input_channels) + "-channel " +
                            info.architecture_id);
    }
  }
  const auto id = run_id(role, cfg.model.architecture_id, alpha, tc.seed);
  const auto dir = cfg.output_dir / "runs" / id;
  if (fs::exists(dir) && !resume) throw ValidationError(dir.string() + " already exists; pass --resume to continue");

  auto prepared = load_prepared(cfg);
  const int classes = prepared.labels.class_count();
  train::TrainData data{preprocess_all(prepared.split.train, cfg.dataset.target_size),
                        preprocess_all(prepared.split.val, cfg.dataset.target_size)};
  auto model = detection::build_detector(cfg.model.architecture_id, classes, cfg.model.pretrained, tc.seed);
  train::RunOptions run{dir, id, resume};
  train::TrainResult result;
  switch (role) {
    case train::Role::kTeacher:
      result = train::train_teacher(data, detection::extend_input_channels(model, tc.seed), tc, run);
      break;
    case train::Role::kBaseline:
      result = train::train_baseline(data, model, tc, run);
      break;
    case train::Role::kStudent:
      result = train::train_student(data, cfg.train.teacher_checkpoint, model, lupi::AlphaWeight(*alpha), tc, run);
      break;
  }
  nlohmann::json summary = {{"run_id", id},
                            {"role", train::to_string(role)},
                            {"architecture_id", cfg.model.architecture_id},
                            {"alpha", alpha ? nlohmann::json(*alpha) : nlohmann::json(nullptr)},
                            {"seed", tc.seed},
                            {"epochs_run", result.epochs.empty() ? 0 : result.epochs.back().epoch},
                            {"stopped_early", result.stopped_early},
                            {"best_checkpoint", result.best_checkpoint.filename().string()}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << "run " << id << ": " << result.epochs.size() << " epoch(s), best checkpoint "
      << result.best_checkpoint.string() << "\n";
  return dir;
}

train::SweepResult cmd_sweep(const RunConfig& cfg, bool resume, std::ostream& out) {
  auto alphas = cfg.train.alphas;
  if (alphas.empty() && cfg.train.alpha) alphas.push_back(*cfg.train.alpha);
  if (alphas.empty()) throw ValidationError("train.alphas: at least one alpha is required for a sweep");
  if (cfg.train.teacher_checkpoint.empty()) throw ValidationError("train.teacher_checkpoint: required for a sweep");
  const auto& tc = cfg.train.config;
  const auto dir = cfg.output_dir / "sweeps" / (cfg.model.architecture_id + "_s" + std::to_string(tc.seed));
  if (fs::exists(dir) && !resume) throw ValidationError(dir.string() + " already exists; pass --resume to continue");

  auto teacher = detection::load_detector(cfg.train.teacher_checkpoint);
  auto prepared = load_prepared(cfg);
  if (teacher.class_count() != prepared.labels.class_count()) {
    throw ValidationError("teacher has " + std::to_string(teacher.class_count()) + " classes, dataset has " +
                          std::to_string(prepared.labels.class_count()));
  }
  train::TrainData data{preprocess_all(prepared.split.train, cfg.dataset.target_size),
                        preprocess_all(prepared.split.val, cfg.dataset.target_size)};
  const auto eval_samples = preprocess_all(prepared.part(cfg.eval.split), cfg.dataset.target_size);
  auto result = train::sweep_alpha(data, teacher, cfg.model.architecture_id, alphas, tc, eval_samples,
                                   {dir, "sweep_" + cfg.model.architecture_id + "_s" + std::to_string(tc.seed), resume});
  write_text(dir / "sweep.csv", result.csv());
  write_text(dir / "best_alpha.txt", alpha_text(result.best_alpha) + "\n");

  std::vector<std::pair<std::string, eval::EvalReport>> rows;
  for (const auto& r : result.rows) rows.emplace_back("alpha=" + alpha_text(r.alpha), r.report);
  out << eval::compare_runs(rows).table();
  out << "best alpha: " << alpha_text(result.best_alpha) << "\n";
  return result;
}

std::vector<eval::EvalReport> cmd_evaluate(const RunConfig& cfg, const std::vector<fs::path>& checkpoints,
                                           bool perfect_oracle, std::ostream& out) {
  if (!perfect_oracle) require_checkpoints(checkpoints);
  std::vector<std::pair<detection::DetectorHandle, std::string>> models;
  for (const auto& c : checkpoints) models.emplace_back(detection::load_detector(c), checkpoint_label(c));
  auto prepared = load_prepared(cfg);
  const int classes = prepared.labels.class_count();
  for (const auto& [m, label] : models) {
    if (m.class_count() != classes) {
      throw ValidationError(label + " has " + std::to_string(m.class_count()) + " classes, dataset has " +
                            std::to_string(classes));
    }
  }
  const auto& triplets = prepared.part(cfg.eval.split);
  std::vector<ObjectSet> truths;
  for (const auto& t : triplets) truths.push_back(t.truth);
  const auto samples = preprocess_all(triplets, cfg.dataset.target_size);

  std::vector<std::pair<std::string, eval::EvalReport>> reports;
  if (perfect_oracle) {
    auto dets = truths;
    for (auto& set : dets) {
      for (auto& o : set.objects) o.score = 1.0;
    }
    reports.emplace_back("oracle", eval::coco_report(dets, truths, classes, cfg.eval.operating_point));
  }
  for (auto& [m, label] : models) {
    auto dets = train::predict(m, samples);
    reports.emplace_back(label, eval::coco_report(dets, truths, classes, cfg.eval.operating_point));
  }
  std::vector<eval::EvalReport> result;
  for (const auto& [label, report] : reports) {
    write_text(cfg.output_dir / "reports" / (label + ".json"), eval::to_json(report));
    write_text(cfg.output_dir / "reports" / (label + ".csv"),
               eval::csv_header() + "\n" + eval::csv_row(label, report) + "\n");
    result.push_back(report);
  }
  out << eval::compare_runs(reports).table();
  return result;
}

std::vector<fs::path> cmd_gradcam(const RunConfig& cfg, const std::vector<fs::path>& checkpoints,
                                  const std::vector<std::string>& image_ids, bool dump_csv, std::ostream& out) {
  require_checkpoints(checkpoints);
  if (image_ids.empty()) {
    out << "no image ids given; nothing to do\n";
    return {};
  }
  auto prepared = load_prepared(cfg);
  const auto& triplets = prepared.part(cfg.eval.split);
  std::map<std::string, const DatasetTriplet*> by_id;
  for (const auto& t : triplets) by_id[t.id()] = &t;
  std::vector<std::string> unknown;
  for (const auto& id : image_ids) {
    if (!by_id.count(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown image id(s) in split " + cfg.eval.split + ":";
    for (const auto& id : unknown) msg += " " + id;
    msg += "\nvalid ids:";
    for (const auto& [id, t] : by_id) msg += " " + id;
    throw ValidationError(msg);
  }

  const auto dir = cfg.output_dir / "gradcam";
  fs::create_directories(dir);
  std::vector<fs::path> written;
  std::map<std::string, std::vector<ImageRaster>> panels;
  std::map<std::string, int> seen_labels;
  for (const auto& c : checkpoints) {
    detection::CheckpointInfo info;
    auto model = detection::load_detector(c, &info);
    auto label = cam_label(info);
    if (seen_labels[label]++) label += "-" + std::to_string(seen_labels[label]);
    for (const auto& id : image_ids) {
      const auto& t = *by_id[id];
      const auto sample = preprocess_all({t}, cfg.dataset.target_size).front();
      auto x = torch::from_blob(const_cast<float*>(sample.values.data()),
                                {sample.channels, sample.size, sample.size}, torch::kFloat)
                   .slice(0, 0, model.input_channels())
                   .clone();
      const auto map = cam::grad_cam(model, x);
      written.push_back(cam::write_overlay(dir, id, label, map, t.image, "hot", dump_csv));
      panels[id].push_back(cam::overlay(map, t.image));
    }
  }
  if (checkpoints.size() > 1) {
    for (const auto& [id, list] : panels) {
      const int h = list.front().height(), w = list.front().width();
      ImageRaster pair(h, w * static_cast<int>(list.size()), 3);
      for (std::size_t k = 0; k < list.size(); ++k) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < 3; ++ch) pair.at(y, static_cast<int>(k) * w + x, ch) = list[k].at(y, x, ch);
          }
        }
      }
      const auto path = dir / cam::overlay_filename(id, "side_by_side");
      io::save_png(path, pair);
      written.push_back(path);
    }
  }
  out << written.size() << " Grad-CAM image(s) written to " << dir.string() << "\n";
  return written;
}

std::vector<profiling::RuntimeProfile> cmd_profile(const RunConfig& cfg, const std::vector<fs::path>& checkpoints,
                                                   int repeats, std::ostream& out) {
  require_checkpoints(checkpoints);
  if (repeats < 1) throw ValidationError("--repeats must be at least 1");
  std::vector<std::pair<detection::DetectorHandle, std::string>> models;
  for (const auto& c : checkpoints) models.emplace_back(detection::load_detector(c), checkpoint_label(c));
  std::vector<profiling::RuntimeProfile> profiles;
  std::string csv = profiling::csv_header() + "\n";
  const int s = cfg.dataset.target_size;
  for (auto& [m, label] : models) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(cfg.train.config.seed);
    auto batch = at::normal(0.0, 1.0, {1, m.input_channels(), s, s}, gen);
    auto p = profiling::profile(m, batch, repeats, profiling::kMinWarmup, profiling::kGflopsInputSize);
    p.label = label;
    csv += profiling::csv_row(p) + "\n";
    profiles.push_back(p);
  }
  write_text(cfg.output_dir / "profile.csv", csv);
  out << csv;
  return profiles;
}

}  // namespace lupidet::cli
