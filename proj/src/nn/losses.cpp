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
#include "lupidet/lupi_loss.hpp"

#include <cmath>
#include <vector>

#include "lupidet/error.hpp"
#include "lupidet/logging.hpp"

namespace lupidet::lupi {
namespace {

template <typename T>
double distance_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ValidationError("feature lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    if (!std::isfinite(x) || !std::isfinite(y)) throw ValidationError("non-finite feature value");
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0 || nb == 0) {
    log::warn("zero-norm feature vector; cosine distance taken as 1");
    return 1.0;
  }
  // rounding can push the cosine a hair outside [-1, 1]
  const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - cosine;
}

}  // namespace

AlphaWeight::AlphaWeight(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("alpha must lie in [0, 1], got " + std::to_string(value));
}

double cosine_distance(std::span<const double> a, std::span<const double> b) { return distance_impl(a, b); }

double cosine_distance(std::span<const float> a, std::span<const float> b) { return distance_impl(a, b); }

double cosine_distance(const detection::FeatureVector& a, const detection::FeatureVector& b) {
  return distance_impl<float>(a.values, b.values);
}

LossBreakdown lupi_loss(double det_loss, double distance, AlphaWeight alpha, std::int64_t epoch, std::int64_t step) {
  if (!(det_loss >= 0)) throw ValidationError("detection loss must be non-negative");
  if (!(distance >= 0 && distance <= 2)) throw ValidationError("distance must lie in [0, 2]");
  const double a = alpha.value();
  return {det_loss, distance, alpha, (1 - a) * det_loss + a * distance, epoch, step};
}

torch::Tensor batch_cosine_distance(const torch::Tensor& student, const torch::Tensor& teacher) {
  if (student.sizes() != teacher.sizes()) throw ValidationError("student and teacher activations differ in shape");
  const auto n = student.size(0);
  auto s = student.reshape({n, -1});
  auto t = teacher.detach().reshape({n, -1}).to(s.scalar_type());
  auto dot = (s * t).sum(1);
  auto denom = s.norm(2, 1) * t.norm(2, 1);
  auto degenerate = denom == 0;
  if (degenerate.any().item<bool>()) log::warn("zero-norm tap activation; cosine distance taken as 1");
  // the masked branch never sees a zero denominator, so no NaN gradients
  auto safe = torch::where(degenerate, torch::ones_like(denom), denom);
  auto cosine = torch::where(degenerate, torch::zeros_like(dot), dot / safe).clamp(-1.0, 1.0);
  return (1 - cosine).mean();
}

torch::Tensor combine(const torch::Tensor& det, const torch::Tensor& distance, AlphaWeight alpha) {
  const double a = alpha.value();
  return (1 - a) * det + a * distance;
}

}  // namespace lupidet::lupi
