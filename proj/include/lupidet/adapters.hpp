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

#include "lupidet/detector.hpp"

namespace lupidet::detection {

// Built-in architectures:
//   tiny_anchor_free  single-scale anchor-free head over a 4-conv backbone
//                     (reference detector, stride 4, tap backbone.block4)
//   mini_retinanet    one-stage, anchor-based, two-level feature pyramid,
//                     focal loss (tap backbone.block4, before the pyramid)
//   mini_faster_rcnn  two-stage: region proposal network plus RoI head on a
//                     single-level neck (tap backbone.block4, before the neck)
inline constexpr const char* kTinyAnchorFree = "tiny_anchor_free";
inline constexpr const char* kMiniRetinaNet = "mini_retinanet";
inline constexpr const char* kMiniFasterRcnn = "mini_faster_rcnn";

void register_builtin_adapters(Registry& registry);

}  // namespace lupidet::detection
