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
#include "lupidet/interpretability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/logging.hpp"

namespace lupidet::cam {
namespace {

double ramp(double v, double lo, double hi) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); }

std::uint8_t to8(double v) { return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)); }

}  // namespace

std::pair<int, int> Heatmap::argmax() const {
  if (values.empty()) throw ValidationError("empty heatmap");
  const auto it = std::max_element(values.begin(), values.end());
  const auto i = static_cast<int>(it - values.begin());
  return {i / width, i % width};
}

Heatmap normalize(Heatmap map) {
  if (map.values.empty()) return map;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const float mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(map.values.begin(), map.values.end(), 0.0f);
    return map;
  }
  for (float& v : map.values) v = std::clamp((v - mn) / (mx - mn), 0.0f, 1.0f);
  return map;
}

Heatmap grad_cam(detection::DetectorHandle& handle, const torch::Tensor& image, const CamTarget& target) {
  if (target.top_k < 1) throw ValidationError("top_k must be at least 1");
  if (image.dim() != 3 || image.size(0) != handle.input_channels()) {
    throw ValidationError("grad_cam expects one [" + std::to_string(handle.input_channels()) + ", H, W] image");
  }
  handle.eval();
  torch::AutoGradMode grad_on(true);
  // gradients must reach the tap even when every parameter is frozen
  auto x = image.detach().to(torch::kFloat).unsqueeze(0).clone().requires_grad_(true);
  auto out = handle.module().scores_with_tap(x);
  auto scores = out.scores[0];
  const auto k = std::min<std::int64_t>(target.top_k, scores.numel());
  auto objective = std::get<0>(scores.topk(k)).sum();
  auto grads = torch::autograd::grad({objective}, {out.features}, {}, false, false, true)[0];
  if (!grads.defined()) grads = torch::zeros_like(out.features);

  auto weights = grads.mean({2, 3}, true);
  auto cam = torch::relu((weights * out.features).sum(1))[0].detach().contiguous();
  Heatmap map{static_cast<int>(cam.size(0)), static_cast<int>(cam.size(1)),
              std::vector<float>(cam.data_ptr<float>(), cam.data_ptr<float>() + cam.numel())};
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  if (!(*hi > *lo)) log::warn("Grad-CAM map is constant (vanishing gradient or activation); returning zeros");
  return normalize(std::move(map));
}

std::array<std::uint8_t, 3> colormap(const std::string& id, double v) {
  v = std::clamp(v, 0.0, 1.0);
  if (id == "hot") {
    // piecewise-linear black, red, yellow, white
    return {to8(ramp(v, 0.0, 0.365079)), to8(ramp(v, 0.365079, 0.746032)), to8(ramp(v, 0.746032, 1.0))};
  }
  if (id == "jet") {
    auto f = [](double t) { return std::clamp(1.5 - std::abs(4.0 * t), 0.0, 1.0); };
    return {to8(f(v - 0.75)), to8(f(v - 0.5)), to8(f(v - 0.25))};
  }
  if (id == "gray") return {to8(v), to8(v), to8(v)};
  throw ValidationError("unknown colormap '" + id + "' (expected hot, jet or gray)");
}

ImageRaster overlay(const Heatmap& heatmap, const ImageRaster& image, const std::string& colormap_id) {
  if (image.channels() != 3) throw ValidationError("overlay needs an RGB image");
  if (heatmap.values.size() != static_cast<std::size_t>(heatmap.height) * heatmap.width || heatmap.values.empty()) {
    throw ValidationError("malformed heatmap");
  }
  colormap(colormap_id, 0.0);  // rejects unknown ids up front
  const auto up = io::resize_bilinear(heatmap.values, heatmap.height, heatmap.width, image.height(), image.width());
  ImageRaster out(image.height(), image.width(), 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto color = colormap(colormap_id, up[static_cast<std::size_t>(y) * image.width() + x]);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<std::uint8_t>((image.at(y, x, c) + color[c] + 1) / 2);
    }
  }
  return out;
}

std::string overlay_filename(const std::string& image_id, const std::string& run_label) {
  return image_id + "." + run_label + ".gradcam.png";
}

std::filesystem::path write_overlay(const std::filesystem::path& dir, const std::string& image_id,
                                    const std::string& run_label, const Heatmap& heatmap, const ImageRaster& image,
                                    const std::string& colormap_id, bool dump_csv) {
  const auto path = dir / overlay_filename(image_id, run_label);
  io::save_png(path, overlay(heatmap, image, colormap_id));
  if (dump_csv) {
    std::ofstream csv(dir / (image_id + "." + run_label + ".gradcam.csv"));
    if (!csv) throw IoError("cannot write heatmap CSV in " + dir.string());
    csv.precision(9);
    for (int y = 0; y < heatmap.height; ++y) {
      for (int x = 0; x < heatmap.width; ++x) csv << (x ? "," : "") << heatmap.at(y, x);
      csv << '\n';
    }
  }
  return path;
}

}  // namespace lupidet::cam
