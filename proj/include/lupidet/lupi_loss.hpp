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

// Privileged-information distillation loss. The student's detection loss is
// blended with the cosine distance between its tap activation and the
// frozen teacher's:  combined = (1 - alpha) * det + alpha * distance.

#include <cstdint>
#include <span>

#include <torch/torch.h>

#include "lupidet/detector.hpp"

namespace lupidet::lupi {

/// Teacher weight in [0, 1].
class AlphaWeight {
 public:
  /// Throws ValidationError outside [0, 1] or for non-finite values.
  explicit AlphaWeight(double value);
  double value() const { return value_; }

 private:
  double value_;
};

struct LossBreakdown {
  double detection_loss = 0;
  double distill_distance = 0;  // in [0, 2]
  AlphaWeight alpha{0.0};
  double combined = 0;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
};

/// 1 - a.b / (|a| |b|), computed in double. A zero-norm input yields 1 and
/// a warning. Throws ValidationError on length mismatch or non-finite input.
double cosine_distance(std::span<const double> a, std::span<const double> b);
double cosine_distance(std::span<const float> a, std::span<const float> b);
double cosine_distance(const detection::FeatureVector& a, const detection::FeatureVector& b);

/// Throws ValidationError when det_loss < 0 or distance lies outside [0, 2].
LossBreakdown lupi_loss(double det_loss, double distance, AlphaWeight alpha, std::int64_t epoch = 0,
                        std::int64_t step = 0);

/// Mean over the batch of the per-image cosine distance between flattened
/// student and teacher activations. The teacher term is detached, so
/// gradients reach the student only. Images with a zero-norm side count as
/// distance 1 and contribute no gradient.
torch::Tensor batch_cosine_distance(const torch::Tensor& student, const torch::Tensor& teacher);

/// (1 - alpha) * det + alpha * distance, kept in the autograd graph. At
/// alpha = 0 the result and its gradients equal det exactly.
torch::Tensor combine(const torch::Tensor& det, const torch::Tensor& distance, AlphaWeight alpha);

}  // namespace lupidet::lupi
