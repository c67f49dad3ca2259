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
#include "lupidet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>

#include "lupidet/error.hpp"
#include "lupidet/image_io.hpp"
#include "lupidet/rng.hpp"

namespace lupidet::synth {
namespace {

enum class ClutterKind { kRing, kFrame, kCross };

using Rgb = std::array<int, 3>;

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

bool clutter_contains(ClutterKind kind, int ox, int oy, int size, int x, int y) {
  const int dx = x - ox, dy = y - oy;
  if (dx < 0 || dy < 0 || dx >= size || dy >= size) return false;
  switch (kind) {
    case ClutterKind::kRing: {
      const int u = 2 * dx + 1 - size, v = 2 * dy + 1 - size;
      const int r2 = u * u + v * v;
      const int inner = size - 6;
      return r2 <= size * size && r2 > inner * inner;
    }
    case ClutterKind::kFrame:
      return dx < 2 || dy < 2 || dx >= size - 2 || dy >= size - 2;
    case ClutterKind::kCross: {
      const int mid = size / 2;
      return std::abs(dx - mid) <= 1 || std::abs(dy - mid) <= 1;
    }
  }
  return false;
}

// Value noise: random lattice every `cell` pixels, bilinear in integers.
std::vector<int> value_noise(Rng& rng, int size, int cell, int amplitude) {
  const int n = size / cell + 2;
  std::vector<int> lattice(static_cast<std::size_t>(n) * n);
  for (int& v : lattice) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(amplitude) + 1));
  std::vector<int> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const int gy = y / cell, fy = y % cell;
    for (int x = 0; x < size; ++x) {
      const int gx = x / cell, fx = x % cell;
      const int a = lattice[gy * n + gx], b = lattice[gy * n + gx + 1];
      const int c = lattice[(gy + 1) * n + gx], d = lattice[(gy + 1) * n + gx + 1];
      const int top = a * (cell - fx) + b * fx;
      const int bottom = c * (cell - fx) + d * fx;
      out[static_cast<std::size_t>(y) * size + x] = (top * (cell - fy) + bottom * fy) / (cell * cell);
    }
  }
  return out;
}

Rgb random_color(Rng& rng) {
  return {static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256))};
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kCircle:
      return "circle";
    case ShapeKind::kSquare:
      return "square";
    case ShapeKind::kTriangle:
      return "triangle";
  }
  return "unknown";
}

void SceneSpec::validate() const {
  if (image_size <= 0) throw ValidationError("image_size must be positive");
  if (class_shapes.empty()) throw ValidationError("at least one class shape is required");
  if (min_objects < 0 || max_objects < min_objects) throw ValidationError("invalid objects_per_image range");
  if (min_size < 3 || max_size < min_size) throw ValidationError("invalid size_range");
  if (max_size > image_size) {
    throw ValidationError("size_range exceeds the image: " + std::to_string(max_size) + " > " +
                          std::to_string(image_size));
  }
  if (min_distractors < 0 || max_distractors < min_distractors) throw ValidationError("invalid distractor range");
  if (noise_cell <= 0 || noise_amplitude < 0 || pixel_noise < 0) throw ValidationError("invalid noise parameters");
  if (object_blend < 0 || object_blend > 100) throw ValidationError("object_blend must lie in [0,100]");
  // max_objects squares of max_size need room with a 1-pixel gap
  const long long need = static_cast<long long>(min_objects) * (min_size + 1) * (min_size + 1);
  if (need > static_cast<long long>(image_size) * image_size / 2) {
    throw ValidationError("objects_per_image cannot fit into the image");
  }
}

bool shape_contains(ShapeKind kind, int ox, int oy, int size, int x, int y) {
  const int dx = x - ox, dy = y - oy;
  if (dx < 0 || dy < 0 || dx >= size || dy >= size) return false;
  switch (kind) {
    case ShapeKind::kSquare:
      return true;
    case ShapeKind::kCircle: {
      const int u = 2 * dx + 1 - size, v = 2 * dy + 1 - size;
      return u * u + v * v <= size * size;
    }
    case ShapeKind::kTriangle: {
      // apex at the top centre, base on the bottom row
      const int u = std::abs(2 * dx + 1 - size);
      return u * size <= (size - 1) * (dy + 1);
    }
  }
  return false;
}

Scene render_scene(const SceneSpec& spec, int index) {
  spec.validate();
  const int S = spec.image_size;
  const int C = spec.class_count();
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));

  char id[64];
  std::snprintf(id, sizeof id, "synth_%llu_%05d", static_cast<unsigned long long>(spec.seed), index);

  Scene scene;
  scene.triplet.truth.image_id = id;
  scene.triplet.image = ImageRaster(S, S, 3);
  scene.instance_ids = ImageRaster(S, S, 1, 0);
  ImageRaster& img = scene.triplet.image;

  std::array<std::vector<int>, 3> noise;
  std::array<int, 3> base{};
  for (int c = 0; c < 3; ++c) {
    base[c] = 40 + static_cast<int>(rng.below(120));
    noise[c] = value_noise(rng, S, spec.noise_cell, spec.noise_amplitude);
  }
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int jitter = spec.pixel_noise ? static_cast<int>(rng.between(-spec.pixel_noise, spec.pixel_noise)) : 0;
        img.at(y, x, c) = clamp8(base[c] + noise[c][static_cast<std::size_t>(y) * S + x] - spec.noise_amplitude / 2 + jitter);
      }
    }
  }

  const int n_clutter = static_cast<int>(rng.between(spec.min_distractors, spec.max_distractors));
  for (int k = 0; k < n_clutter; ++k) {
    const auto kind = static_cast<ClutterKind>(rng.below(3));
    const int size = static_cast<int>(rng.between(spec.min_size, spec.max_size));
    const int ox = static_cast<int>(rng.between(0, S - size));
    const int oy = static_cast<int>(rng.between(0, S - size));
    const Rgb color = random_color(rng);
    for (int y = oy; y < oy + size; ++y) {
      for (int x = ox; x < ox + size; ++x) {
        if (!clutter_contains(kind, ox, oy, size, x, y)) continue;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp8(color[c]);
      }
    }
  }

  const int n_objects = static_cast<int>(rng.between(spec.min_objects, spec.max_objects));
  std::vector<std::array<int, 3>> placed;  // ox, oy, size
  for (int k = 0; k < n_objects; ++k) {
    const int label = (index + k) % C;
    const ShapeKind kind = spec.class_shapes[label];
    bool done = false;
    for (int attempt = 0; attempt < 200 && !done; ++attempt) {
      const int size = static_cast<int>(rng.between(spec.min_size, spec.max_size));
      const int ox = static_cast<int>(rng.between(0, S - size));
      const int oy = static_cast<int>(rng.between(0, S - size));
      const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const auto& p) {
        return ox < p[0] + p[2] + 1 && p[0] < ox + size + 1 && oy < p[1] + p[2] + 1 && p[1] < oy + size + 1;
      });
      if (overlaps) continue;
      placed.push_back({ox, oy, size});

      Rgb color = random_color(rng);
      int min_x = S, min_y = S, max_x = -1, max_y = -1;
      const auto instance = static_cast<std::uint8_t>(scene.triplet.truth.objects.size() + 1);
      for (int y = oy; y < oy + size; ++y) {
        for (int x = ox; x < ox + size; ++x) {
          if (!shape_contains(kind, ox, oy, size, x, y)) continue;
          for (int c = 0; c < 3; ++c) {
            const int under = img.at(y, x, c);
            img.at(y, x, c) = clamp8((color[c] * (100 - spec.object_blend) + under * spec.object_blend) / 100);
          }
          scene.instance_ids.at(y, x) = instance;
          min_x = std::min(min_x, x);
          min_y = std::min(min_y, y);
          max_x = std::max(max_x, x);
          max_y = std::max(max_y, y);
        }
      }
      BoundingBox box{static_cast<double>(min_x), static_cast<double>(min_y), static_cast<double>(max_x + 1),
                      static_cast<double>(max_y + 1)};
      scene.triplet.truth.objects.push_back({box, label, std::nullopt});
      done = true;
    }
    if (!done) throw ValidationError("could not place object " + std::to_string(k) + " in " + id);
  }
  return scene;
}

std::vector<DatasetTriplet> generate(const SceneSpec& spec, int n_images) {
  if (n_images < 1) throw ValidationError("n_images must be at least 1");
  spec.validate();
  std::vector<DatasetTriplet> out;
  out.reserve(n_images);
  for (int i = 0; i < n_images; ++i) out.push_back(std::move(render_scene(spec, i).triplet));
  return out;
}

LabelMap label_map(const SceneSpec& spec) {
  LabelMap m;
  for (int c = 0; c < spec.class_count(); ++c) {
    m.names.push_back(to_string(spec.class_shapes[c]));
    m.original_ids.push_back(c + 1);
  }
  return m;
}

SceneSpec acceptance_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  return spec;
}

data::Split make_acceptance_suite(std::uint64_t seed) {
  auto all = generate(acceptance_spec(seed), 420);
  data::Split s;
  for (int i = 0; i < 420; ++i) {
    auto& dst = i < 300 ? s.train : (i < 360 ? s.val : s.test);
    dst.push_back(std::move(all[i]));
  }
  return s;
}

int write_dataset(const std::filesystem::path& dir, const std::vector<DatasetTriplet>& triplets,
                  const LabelMap& labels) {
  int changed = 0;
  for (const auto& t : triplets) {
    changed += io::write_if_changed(dir / "images" / (t.id() + ".png"), io::encode_png(t.image));
  }
  changed += io::write_if_changed(dir / "annotations.json", data::coco_json(triplets, labels));
  return changed;
}

}  // namespace lupidet::synth
