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

#include "lupidet/types.hpp"

namespace lupidet::detection {

inline constexpr double kDefaultNmsIou = 0.5;

/// Class-aware greedy NMS. Per class the highest-scoring box is kept and
/// every box with IoU > iou_threshold against a kept box is removed. The
/// result is sorted by descending score (stable).
ObjectSet nms(const ObjectSet& detections, double iou_threshold = kDefaultNmsIou);

}  // namespace lupidet::detection
