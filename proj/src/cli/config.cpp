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
#include "lupidet/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lupidet/error.hpp"

namespace lupidet::cli {
namespace {

using nlohmann::json;

// Typed field access that records problems instead of throwing.
class Reader {
 public:
  Reader(std::vector<std::string>& problems, std::filesystem::path base) : problems_(problems), base_(std::move(base)) {}

  // Object at path, or nullptr (missing is fine, wrong type is a problem).
  const json* object(const json& parent, const std::string& key, const std::string& path,
                     const std::set<std::string>& known) {
    if (!parent.contains(key)) return nullptr;
    const auto& v = parent.at(key);
    if (!v.is_object()) {
      problem(path, "must be an object");
      return nullptr;
    }
    for (const auto& [k, unused] : v.items()) {
      if (!known.count(k)) problem(path + "." + k, "unknown field");
    }
    return &v;
  }

  template <typename T>
  void get(const json* obj, const std::string& key, const std::string& path, T& out) {
    if (!obj || !obj->contains(key)) return;
    const auto& v = obj->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      problem(path, "has the wrong type (" + std::string(v.type_name()) + ")");
    }
  }

  void path(const json* obj, const std::string& key, const std::string& field, std::filesystem::path& out) {
    std::string s;
    get(obj, key, field, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = p.is_absolute() || base_.empty() ? p : base_ / p;
  }

  void problem(const std::string& path, const std::string& message) { problems_.push_back(path + ": " + message); }

 private:
  std::vector<std::string>& problems_;
  std::filesystem::path base_;
};

void require_path(std::vector<std::string>& out, const std::string& field, const std::filesystem::path& p,
                  bool directory) {
  if (p.empty()) {
    out.push_back(field + ": required");
  } else if (!std::filesystem::exists(p)) {
    out.push_back(field + ": path does not exist: " + p.string());
  } else if (directory != std::filesystem::is_directory(p)) {
    out.push_back(field + ": expected a " + std::string(directory ? "directory" : "file") + ": " + p.string());
  }
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config: top level must be an object");

  std::vector<std::string> problems;
  Reader r(problems, base_dir);
  RunConfig c;
  for (const auto& [k, unused] : doc.items()) {
    static const std::set<std::string> top = {"schema_version", "output_dir", "dataset", "privileged",
                                              "model",          "train",      "eval"};
    if (!top.count(k)) r.problem(k, "unknown field");
  }
  if (!doc.contains("schema_version")) r.problem("schema_version", "required");
  r.get(&doc, "schema_version", "schema_version", c.schema_version);
  r.path(&doc, "output_dir", "output_dir", c.output_dir);

  if (const auto* d = r.object(doc, "dataset", "dataset",
                               {"format", "annotations", "xml_dir", "image_root", "class_names", "tiling", "split",
                                "seed", "target_size", "synthetic"})) {
    auto& ds = c.dataset;
    r.get(d, "format", "dataset.format", ds.format);
    r.path(d, "annotations", "dataset.annotations", ds.annotations);
    r.path(d, "xml_dir", "dataset.xml_dir", ds.xml_dir);
    r.path(d, "image_root", "dataset.image_root", ds.image_root);
    r.get(d, "class_names", "dataset.class_names", ds.class_names);
    r.get(d, "seed", "dataset.seed", ds.seed);
    r.get(d, "target_size", "dataset.target_size", ds.target_size);
    if (const auto* t = r.object(*d, "tiling", "dataset.tiling", {"rows", "cols"})) {
      r.get(t, "rows", "dataset.tiling.rows", ds.tiling.rows);
      r.get(t, "cols", "dataset.tiling.cols", ds.tiling.cols);
    }
    if (const auto* s = r.object(*d, "split", "dataset.split", {"train", "val", "test"})) {
      r.get(s, "train", "dataset.split.train", ds.split.train);
      r.get(s, "val", "dataset.split.val", ds.split.val);
      r.get(s, "test", "dataset.split.test", ds.split.test);
    }
    if (const auto* s = r.object(*d, "synthetic", "dataset.synthetic", {"seed", "images"})) {
      r.get(s, "seed", "dataset.synthetic.seed", ds.synthetic_seed);
      r.get(s, "images", "dataset.synthetic.images", ds.synthetic_images);
    }
  } else {
    r.problem("dataset", "required");
  }

  if (const auto* p = r.object(doc, "privileged", "privileged", {"mode", "sources", "weights", "intensity_map"})) {
    auto& pb = c.privileged;
    r.get(p, "mode", "privileged.mode", pb.mode);
    r.get(p, "weights", "privileged.weights", pb.weights);
    r.get(p, "intensity_map", "privileged.intensity_map", pb.intensity_map);
    if (p->contains("sources")) {
      const auto& src = p->at("sources");
      if (!src.is_array()) {
        r.problem("privileged.sources", "must be an array");
      } else {
        for (std::size_t i = 0; i < src.size(); ++i) {
          const std::string field = "privileged.sources[" + std::to_string(i) + "]";
          if (!src[i].is_object()) {
            r.problem(field, "must be an object");
            continue;
          }
          PrivilegedSource s;
          r.get(&src[i], "role", field + ".role", s.role);
          r.path(&src[i], "dir", field + ".dir", s.dir);
          pb.sources.push_back(s);
        }
      }
    }
  }

  if (const auto* m = r.object(doc, "model", "model", {"architecture_id", "pretrained"})) {
    r.get(m, "architecture_id", "model.architecture_id", c.model.architecture_id);
    r.get(m, "pretrained", "model.pretrained", c.model.pretrained);
  }

  if (const auto* t = r.object(doc, "train", "train",
                               {"epochs", "learning_rate", "early_stop_patience", "batch_size", "seed", "alpha",
                                "alphas", "monitor", "teacher_checkpoint"})) {
    auto& tc = c.train.config;
    r.get(t, "epochs", "train.epochs", tc.epochs);
    r.get(t, "learning_rate", "train.learning_rate", tc.learning_rate);
    r.get(t, "early_stop_patience", "train.early_stop_patience", tc.early_stop_patience);
    r.get(t, "batch_size", "train.batch_size", tc.batch_size);
    r.get(t, "seed", "train.seed", tc.seed);
    if (t->contains("alpha")) {
      double a = 0;
      r.get(t, "alpha", "train.alpha", a);
      c.train.alpha = a;
    }
    r.get(t, "alphas", "train.alphas", c.train.alphas);
    std::string monitor = "combined";
    r.get(t, "monitor", "train.monitor", monitor);
    if (monitor == "combined") {
      tc.student_monitor = train::Monitor::kCombined;
    } else if (monitor == "detection") {
      tc.student_monitor = train::Monitor::kDetection;
    } else {
      r.problem("train.monitor", "must be combined or detection");
    }
    r.path(t, "teacher_checkpoint", "train.teacher_checkpoint", c.train.teacher_checkpoint);
  }

  if (const auto* e = r.object(doc, "eval", "eval", {"score_threshold", "iou_threshold", "split"})) {
    r.get(e, "score_threshold", "eval.score_threshold", c.eval.operating_point.score_threshold);
    r.get(e, "iou_threshold", "eval.iou_threshold", c.eval.operating_point.iou_threshold);
    r.get(e, "split", "eval.split", c.eval.split);
  }

  c.parse_problems = std::move(problems);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out = parse_problems;
  if (schema_version != kSchemaVersion) {
    out.push_back("schema_version: unsupported version " + std::to_string(schema_version) + " (expected " +
                  std::to_string(kSchemaVersion) + ")");
  }
  if (output_dir.empty()) out.push_back("output_dir: required");

  const auto& ds = dataset;
  if (ds.format == "coco") {
    require_path(out, "dataset.annotations", ds.annotations, false);
    require_path(out, "dataset.image_root", ds.image_root, true);
  } else if (ds.format == "voc") {
    require_path(out, "dataset.xml_dir", ds.xml_dir, true);
    require_path(out, "dataset.image_root", ds.image_root, true);
    if (ds.class_names.empty()) out.push_back("dataset.class_names: required for voc");
  } else if (ds.format != "synthetic") {
    out.push_back("dataset.format: must be coco, voc or synthetic");
  }
  if (ds.tiling.rows < 1 || ds.tiling.cols < 1) out.push_back("dataset.tiling: rows and cols must be at least 1");
  const double fsum = ds.split.train + ds.split.val + ds.split.test;
  if (ds.split.train < 0 || ds.split.val < 0 || ds.split.test < 0 || std::abs(fsum - 1.0) > 1e-6) {
    out.push_back("dataset.split: fractions must be non-negative and sum to 1");
  }
  if (ds.target_size < 8) out.push_back("dataset.target_size: must be at least 8");
  if (ds.synthetic_images < 0) out.push_back("dataset.synthetic.images: must be non-negative");

  const auto& pb = privileged;
  if (pb.mode == "external" || pb.mode == "fusion") {
    if (pb.sources.empty()) out.push_back("privileged.sources: required for mode " + pb.mode);
    if (pb.mode == "external" && pb.sources.size() > 1) out.push_back("privileged.sources: external takes one source");
    for (std::size_t i = 0; i < pb.sources.size(); ++i) {
      const auto field = "privileged.sources[" + std::to_string(i) + "]";
      if (pb.sources[i].role != "saliency" && pb.sources[i].role != "depth" && pb.sources[i].role != "mask") {
        out.push_back(field + ".role: must be saliency, depth or mask");
      }
      if (pb.sources[i].role != "mask") require_path(out, field + ".dir", pb.sources[i].dir, true);
    }
    if (pb.mode == "fusion" && pb.weights.size() != pb.sources.size()) {
      out.push_back("privileged.weights: one weight per source required");
    }
  } else if (pb.mode != "bbox_mask") {
    out.push_back("privileged.mode: must be bbox_mask, external or fusion");
  }
  for (std::size_t i = 0; i < pb.intensity_map.size(); ++i) {
    if (pb.intensity_map[i] < 1 || pb.intensity_map[i] > 255) {
      out.push_back("privileged.intensity_map[" + std::to_string(i) + "]: must lie in [1, 255]");
    }
  }

  if (!detection::Registry::instance().contains(model.architecture_id)) {
    std::string known;
    for (const auto& id : detection::registered_architectures()) known += (known.empty() ? "" : ", ") + id;
    out.push_back("model.architecture_id: unknown '" + model.architecture_id + "' (registered: " + known + ")");
  }

  const auto& tc = train.config;
  if (tc.epochs < 1) out.push_back("train.epochs: must be at least 1");
  if (!(tc.learning_rate > 0)) out.push_back("train.learning_rate: must be positive");
  if (tc.early_stop_patience < 1) out.push_back("train.early_stop_patience: must be at least 1");
  if (tc.batch_size < 1) out.push_back("train.batch_size: must be at least 1");
  if (train.alpha && !(*train.alpha >= 0 && *train.alpha <= 1)) out.push_back("train.alpha: must lie in [0, 1]");
  for (std::size_t i = 0; i < train.alphas.size(); ++i) {
    if (!(train.alphas[i] >= 0 && train.alphas[i] <= 1)) {
      out.push_back("train.alphas[" + std::to_string(i) + "]: must lie in [0, 1]");
    }
  }
  if (!train.teacher_checkpoint.empty()) require_path(out, "train.teacher_checkpoint", train.teacher_checkpoint, false);

  if (eval.split != "train" && eval.split != "val" && eval.split != "test") {
    out.push_back("eval.split: must be train, val or test");
  }
  const auto& op = eval.operating_point;
  if (!(op.score_threshold >= 0 && op.score_threshold <= 1)) out.push_back("eval.score_threshold: must lie in [0, 1]");
  if (!(op.iou_threshold > 0 && op.iou_threshold <= 1)) out.push_back("eval.iou_threshold: must lie in (0, 1]");
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid config (" + std::to_string(p.size()) + " problem(s)):";
  for (const auto& s : p) msg += "\n  " + s;
  throw ValidationError(msg);
}

}  // namespace lupidet::cli
