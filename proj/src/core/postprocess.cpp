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
#include "lupidet/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include "lupidet/error.hpp"

namespace lupidet::detection {

ObjectSet nms(const ObjectSet& detections, double iou_threshold) {
  const auto& objs = detections.objects;
  for (const auto& o : objs) {
    if (!o.score) throw ValidationError("nms requires scored detections");
  }
  std::vector<std::size_t> order(objs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return *objs[a].score > *objs[b].score; });

  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (objs[k].label == objs[i].label && iou(objs[k].box, objs[i].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  ObjectSet out{detections.image_id, {}};
  out.objects.reserve(kept.size());
  for (std::size_t k : kept) out.objects.push_back(objs[k]);
  return out;
}

}  // namespace lupidet::detection
