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
#include "lupidet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/logging.hpp"
#include "lupidet/rng.hpp"

namespace lupidet::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& node, const std::string& key, const std::string& where) {
  if (!node.is_object() || !node.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  return node.at(key);
}

std::int64_t require_int(const json& node, const std::string& key, const std::string& where) {
  const json& v = require(node, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + key + ": expected an integer");
  return v.get<std::int64_t>();
}

std::string require_string(const json& node, const std::string& key, const std::string& where) {
  const json& v = require(node, key, where);
  if (!v.is_string()) throw ParseError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

const json& require_array(const json& node, const std::string& key, const std::string& where) {
  const json& v = require(node, key, where);
  if (!v.is_array()) throw ParseError(where + key + ": expected an array");
  return v;
}

// Clips to the image and reports whether anything is left.
std::optional<BoundingBox> clip_to_image(const BoundingBox& box, int width, int height) {
  BoundingBox c = box.clipped(width, height);
  if (!c.valid()) return std::nullopt;
  return c;
}

void check_missing(const std::vector<std::string>& missing) {
  if (missing.empty()) return;
  std::string msg = "missing image file(s):";
  for (const auto& m : missing) msg += " " + m;
  throw IoError(msg);
}

}  // namespace

IngestResult ingest_coco(const fs::path& annotation_file, const fs::path& image_root) {
  std::ifstream in(annotation_file);
  if (!in) throw IoError("cannot open annotation file " + annotation_file.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(annotation_file.string() + ": invalid JSON: " + e.what());
  }
  if (!root.is_object()) throw ParseError("root: expected an object");

  const json& images = require_array(root, "images", "");
  IngestResult result;
  if (images.empty()) return result;
  const json& categories = require_array(root, "categories", "");
  const json annotations = root.contains("annotations") ? root.at("annotations") : json::array();
  if (!annotations.is_array()) throw ParseError("annotations: expected an array");

  std::map<std::int64_t, std::string> category_names;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const std::string where = "categories[" + std::to_string(i) + "]";
    const std::int64_t id = require_int(categories[i], "id", where);
    std::string name = categories[i].contains("name") ? require_string(categories[i], "name", where)
                                                      : std::to_string(id);
    category_names[id] = std::move(name);
  }
  std::map<std::int64_t, int> remap;
  for (const auto& [id, name] : category_names) {
    remap[id] = static_cast<int>(result.labels.names.size());
    result.labels.names.push_back(name);
    result.labels.original_ids.push_back(id);
  }

  std::map<std::int64_t, std::size_t> image_index;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const std::int64_t id = require_int(images[i], "id", where);
    const std::string file_name = require_string(images[i], "file_name", where);
    const fs::path path = image_root / file_name;
    if (!fs::exists(path)) {
      missing.push_back(path.string());
      continue;
    }
    DatasetTriplet t;
    t.truth.image_id = fs::path(file_name).stem().string();
    t.image = io::load_rgb(path);
    image_index[id] = result.triplets.size();
    result.triplets.push_back(std::move(t));
  }
  check_missing(missing);

  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string where = "annotations[" + std::to_string(i) + "]";
    const json& a = annotations[i];
    const std::int64_t image_id = require_int(a, "image_id", where);
    const std::int64_t category_id = require_int(a, "category_id", where);
    const json& bbox = require(a, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); })) {
      throw ParseError(where + ".bbox: expected an array of 4 numbers");
    }
    auto img = image_index.find(image_id);
    if (img == image_index.end()) {
      throw ParseError(where + ".image_id: unknown image id " + std::to_string(image_id));
    }
    auto cat = remap.find(category_id);
    if (cat == remap.end()) {
      throw ParseError(where + ".category_id: unknown category " + std::to_string(category_id));
    }
    DatasetTriplet& t = result.triplets[img->second];
    const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
    const double w = bbox[2].get<double>(), h = bbox[3].get<double>();
    std::optional<BoundingBox> box;
    if (w > 0 && h > 0) box = clip_to_image({x, y, x + w, y + h}, t.image.width(), t.image.height());
    if (!box) {
      ++result.dropped_degenerate;
      log::warn(where + ": dropping degenerate box in image " + t.id());
      continue;
    }
    t.truth.objects.push_back({*box, cat->second, std::nullopt});
  }
  return result;
}

IngestResult ingest_voc(const fs::path& xml_dir, const fs::path& image_root,
                        const std::vector<std::string>& class_names) {
  namespace pt = boost::property_tree;
  IngestResult result;
  result.labels.names = class_names;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    result.labels.original_ids.push_back(static_cast<std::int64_t>(i));
  }
  if (!fs::is_directory(xml_dir)) throw IoError("not a directory: " + xml_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(xml_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::string> missing;
  for (const auto& file : files) {
    pt::ptree tree;
    try {
      pt::read_xml(file.string(), tree);
    } catch (const pt::xml_parser_error& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
    const auto& ann = tree.get_child_optional("annotation");
    if (!ann) throw ParseError(file.string() + ": missing <annotation>");
    const auto size = ann->get_child_optional("size");
    if (!size) throw ParseError(file.string() + ": missing <size>");
    const int width = size->get<int>("width", 0);
    const int height = size->get<int>("height", 0);
    if (width <= 0 || height <= 0) throw ParseError(file.string() + ": invalid <size>");

    const std::string filename = ann->get<std::string>("filename", file.stem().string() + ".jpg");
    const fs::path image_path = image_root / filename;
    if (!fs::exists(image_path)) {
      missing.push_back(image_path.string());
      continue;
    }

    DatasetTriplet t;
    t.truth.image_id = fs::path(filename).stem().string();
    for (const auto& [key, obj] : *ann) {
      if (key != "object") continue;
      const std::string name = obj.get<std::string>("name", "");
      auto it = std::find(class_names.begin(), class_names.end(), name);
      if (it == class_names.end()) {
        throw ValidationError(file.string() + ": unknown class name '" + name + "'");
      }
      const auto bnd = obj.get_child_optional("bndbox");
      if (!bnd) throw ParseError(file.string() + ": object without <bndbox>");
      BoundingBox raw{bnd->get<double>("xmin") - 1.0, bnd->get<double>("ymin") - 1.0,
                      bnd->get<double>("xmax"), bnd->get<double>("ymax")};
      auto box = clip_to_image(raw, width, height);
      if (!box) {
        ++result.dropped_degenerate;
        log::warn(file.string() + ": dropping degenerate box");
        continue;
      }
      t.truth.objects.push_back({*box, static_cast<int>(it - class_names.begin()), std::nullopt});
    }
    t.image = io::load_rgb(image_path);
    if (t.image.width() != width || t.image.height() != height) {
      log::warn(file.string() + ": <size> disagrees with the image file; boxes re-clipped");
      auto& objs = t.truth.objects;
      std::vector<LabeledObject> kept;
      for (auto& o : objs) {
        if (auto b = clip_to_image(o.box, t.image.width(), t.image.height())) {
          kept.push_back({*b, o.label, std::nullopt});
        } else {
          ++result.dropped_degenerate;
        }
      }
      objs = std::move(kept);
    }
    result.triplets.push_back(std::move(t));
  }
  check_missing(missing);
  return result;
}

std::string coco_json(const std::vector<DatasetTriplet>& triplets, const LabelMap& labels) {
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  for (int c = 0; c < labels.class_count(); ++c) {
    categories.push_back({{"id", labels.original_ids.at(c)}, {"name", labels.names.at(c)}});
  }
  std::int64_t ann_id = 1;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    const auto image_id = static_cast<std::int64_t>(i + 1);
    images.push_back({{"id", image_id},
                      {"file_name", t.id() + ".png"},
                      {"width", t.image.width()},
                      {"height", t.image.height()}});
    for (const auto& o : t.truth.objects) {
      const auto& b = o.box;
      annotations.push_back({{"id", ann_id++},
                             {"image_id", image_id},
                             {"category_id", labels.original_ids.at(o.label)},
                             {"bbox", {b.x_min, b.y_min, b.width(), b.height()}},
                             {"area", b.area()},
                             {"iscrowd", 0}});
    }
  }
  json root = {{"images", images}, {"annotations", annotations}, {"categories", categories}};
  return root.dump(1);
}

void write_coco(const fs::path& annotation_file, const std::vector<DatasetTriplet>& triplets,
                const LabelMap& labels) {
  io::write_if_changed(annotation_file, coco_json(triplets, labels));
}

std::array<int, 4> tile_rect(int image_height, int image_width, TileGrid grid, int row, int col) {
  const int base_w = image_width / grid.cols;
  const int base_h = image_height / grid.rows;
  const int x0 = col * base_w;
  const int y0 = row * base_h;
  const int w = col == grid.cols - 1 ? image_width - x0 : base_w;
  const int h = row == grid.rows - 1 ? image_height - y0 : base_h;
  return {x0, y0, w, h};
}

std::vector<DatasetTriplet> tile(const DatasetTriplet& triplet, TileGrid grid) {
  if (grid.rows < 1 || grid.cols < 1) throw ValidationError("tile grid must be at least 1x1");
  if (grid.rows == 1 && grid.cols == 1) return {triplet};
  triplet.validate();
  const int height = triplet.image.height();
  const int width = triplet.image.width();
  if (grid.rows > height || grid.cols > width) {
    throw ValidationError("tile grid finer than the image in " + triplet.id());
  }

  std::vector<DatasetTriplet> tiles;
  tiles.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto [x0, y0, w, h] = tile_rect(height, width, grid, r, c);
      DatasetTriplet child;
      child.truth.image_id = triplet.id() + "_r" + std::to_string(r) + "c" + std::to_string(c);
      child.image = triplet.image.crop(x0, y0, w, h);
      if (triplet.privileged) child.privileged = triplet.privileged->crop(x0, y0, w, h);
      const BoundingBox frame{static_cast<double>(x0), static_cast<double>(y0),
                              static_cast<double>(x0 + w), static_cast<double>(y0 + h)};
      for (const auto& o : triplet.truth.objects) {
        BoundingBox clipped{std::max(o.box.x_min, frame.x_min), std::max(o.box.y_min, frame.y_min),
                            std::min(o.box.x_max, frame.x_max), std::min(o.box.y_max, frame.y_max)};
        if (clipped.x_min >= clipped.x_max || clipped.y_min >= clipped.y_max) continue;
        if (clipped.area() < kTileKeepFraction * o.box.area()) continue;
        BoundingBox local{clipped.x_min - x0, clipped.y_min - y0, clipped.x_max - x0, clipped.y_max - y0};
        child.truth.objects.push_back({local, o.label, o.score});
      }
      tiles.push_back(std::move(child));
    }
  }
  return tiles;
}

void PreprocessConfig::validate() const {
  if (target_size <= 0) throw ValidationError("target_size must be positive");
  if (channel_stats) {
    if (channel_stats->mean.size() != channel_stats->stddev.size()) {
      throw ValidationError("channel_stats mean/stddev lengths differ");
    }
  }
}

BoundingBox CoordTransform::to_model(const BoundingBox& b) const {
  return {b.x_min * scale_x, b.y_min * scale_y, b.x_max * scale_x, b.y_max * scale_y};
}

BoundingBox CoordTransform::to_image(const BoundingBox& b) const {
  return {b.x_min / scale_x, b.y_min / scale_y, b.x_max / scale_x, b.y_max / scale_y};
}

ObjectSet CoordTransform::to_image(const ObjectSet& s) const {
  ObjectSet out{s.image_id, {}};
  out.objects.reserve(s.objects.size());
  for (const auto& o : s.objects) out.objects.push_back({to_image(o.box), o.label, o.score});
  return out;
}

PreparedSample preprocess(const DatasetTriplet& triplet, const PreprocessConfig& cfg) {
  cfg.validate();
  triplet.validate();
  const int h = triplet.image.height();
  const int w = triplet.image.width();
  const int size = cfg.target_size;
  const int channels = triplet.privileged ? 4 : 3;

  PreparedSample out;
  out.image_id = triplet.id();
  out.channels = channels;
  out.size = size;
  out.source_height = h;
  out.source_width = w;
  out.transform = {static_cast<double>(size) / w, static_cast<double>(size) / h};
  out.values.resize(static_cast<std::size_t>(channels) * size * size);

  std::vector<float> plane(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < channels; ++c) {
    const ImageRaster& src = c < 3 ? triplet.image : *triplet.privileged;
    const int sc = c < 3 ? c : 0;
    int lo = 255, hi = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int v = src.at(y, x, sc);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = src.at(y, x, sc);
        float& dst = plane[static_cast<std::size_t>(y) * w + x];
        if (!cfg.min_max) {
          dst = v / 255.0f;
        } else if (hi == lo) {
          dst = 0.0f;
        } else {
          dst = (v - static_cast<float>(lo)) / static_cast<float>(hi - lo);
        }
      }
    }
    std::vector<float> resized = io::resize_bilinear(plane, h, w, size, size);

    if (cfg.standardize) {
      double mean = 0, stddev = 0;
      if (cfg.channel_stats && static_cast<std::size_t>(c) < cfg.channel_stats->mean.size()) {
        mean = cfg.channel_stats->mean[c];
        stddev = cfg.channel_stats->stddev[c];
      } else {
        for (float v : resized) mean += v;
        mean /= static_cast<double>(resized.size());
        for (float v : resized) stddev += (v - mean) * (v - mean);
        stddev = std::sqrt(stddev / static_cast<double>(resized.size()));
      }
      for (float& v : resized) {
        v = stddev > 1e-12 ? static_cast<float>((v - mean) / stddev) : 0.0f;
      }
    }
    std::copy(resized.begin(), resized.end(), out.values.begin() + static_cast<std::ptrdiff_t>(c) * size * size);
  }

  out.truth.image_id = triplet.id();
  for (const auto& o : triplet.truth.objects) {
    out.truth.objects.push_back({out.transform.to_model(o.box), o.label, o.score});
  }
  return out;
}

Split split(std::vector<DatasetTriplet> dataset, SplitFractions f, std::uint64_t seed) {
  for (double v : {f.train, f.val, f.test}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("split fractions must lie in [0,1]");
  }
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
  const std::size_t n = dataset.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.test + 1e-9));
  Rng rng(seed);
  const auto order = rng.permutation(n);

  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& item = dataset[order[i]];
    if (i < n_val) {
      s.val.push_back(std::move(item));
    } else if (i < n_val + n_test) {
      s.test.push_back(std::move(item));
    } else {
      s.train.push_back(std::move(item));
    }
  }
  return s;
}

int write_split_manifest(const fs::path& dir, const Split& s) {
  auto ids = [](const std::vector<DatasetTriplet>& v) {
    std::string text;
    for (const auto& t : v) text += t.id() + "\n";
    return text;
  };
  int changed = 0;
  changed += io::write_if_changed(dir / "train.txt", ids(s.train));
  changed += io::write_if_changed(dir / "val.txt", ids(s.val));
  changed += io::write_if_changed(dir / "test.txt", ids(s.test));
  return changed;
}

SplitManifest read_split_manifest(const fs::path& dir) {
  auto read = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw IoError("missing split manifest " + (dir / name).string());
    std::vector<std::string> ids;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) ids.push_back(line);
    }
    return ids;
  };
  return {read("train.txt"), read("val.txt"), read("test.txt")};
}

}  // namespace lupidet::data
