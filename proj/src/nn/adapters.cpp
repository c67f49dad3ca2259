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
#include "lupidet/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lupidet/error.hpp"
#include "lupidet/postprocess.hpp"

namespace lupidet::detection {
namespace {

using torch::indexing::None;
using torch::indexing::Slice;
using torch::Tensor;
namespace F = torch::nn::functional;

constexpr const char* kTap = "backbone.block4";
constexpr const char* kInputWeight = "backbone.block1.conv.weight";
const double kFocalPriorBias = -std::log((1.0 - 0.01) / 0.01);
const double kMaxLogScale = std::log(1000.0 / 16.0);
constexpr double kSmoothL1Beta = 1.0 / 9.0;

// ---------------------------------------------------------------------------
// layers

torch::nn::Conv2d make_conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1) {
  auto c = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
  torch::nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanIn, torch::kReLU);
  torch::nn::init::zeros_(c->bias);
  return c;
}

// Prediction layers start small so early losses are dominated by the prior.
template <typename Layer>
void init_prediction(Layer& layer, double std, double bias) {
  torch::NoGradGuard no_grad;
  layer->weight.normal_(0.0, std);
  layer->bias.fill_(bias);
}

struct ConvReluImpl : torch::nn::Module {
  ConvReluImpl(std::int64_t in, std::int64_t out, std::int64_t stride)
      : conv(register_module("conv", make_conv(in, out, 3, stride))) {}
  Tensor forward(Tensor x) { return torch::relu(conv->forward(x)); }
  torch::nn::Conv2d conv;
};
TORCH_MODULE(ConvRelu);

struct Stage {
  std::int64_t channels;
  std::int64_t stride;
};

torch::nn::Sequential make_backbone(std::int64_t in, const std::vector<Stage>& stages) {
  torch::nn::Sequential seq;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    seq->push_back("block" + std::to_string(i + 1), ConvRelu(in, stages[i].channels, stages[i].stride));
    in = stages[i].channels;
  }
  return seq;
}

// output size of a padded 3x3 or 1x1 convolution
std::int64_t conv_out(std::int64_t n, std::int64_t stride) { return (n - 1) / stride + 1; }

class CostWalk {
 public:
  void conv(const std::string& name, std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t oh,
            std::int64_t ow) {
    costs_.push_back({name, static_cast<double>(in) * out * k * k * oh * ow});
  }
  void linear(const std::string& name, std::int64_t in, std::int64_t out, std::int64_t rows) {
    costs_.push_back({name, static_cast<double>(in) * out * rows});
  }
  // Walks backbone stages, leaving (h, w, channels) at the last stage.
  void backbone(std::int64_t in, const std::vector<Stage>& stages, std::int64_t& h, std::int64_t& w,
                std::vector<std::array<std::int64_t, 2>>* sizes = nullptr) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      h = conv_out(h, stages[i].stride);
      w = conv_out(w, stages[i].stride);
      conv("backbone.block" + std::to_string(i + 1), in, stages[i].channels, 3, h, w);
      if (sizes) sizes->push_back({h, w});
      in = stages[i].channels;
    }
  }
  std::vector<LayerCost> take() { return std::move(costs_); }

 private:
  std::vector<LayerCost> costs_;
};

// ---------------------------------------------------------------------------
// box arithmetic on [K, 4] float tensors (x_min, y_min, x_max, y_max)

Tensor box_area(const Tensor& b) {
  return (b.select(1, 2) - b.select(1, 0)).clamp_min(0) * (b.select(1, 3) - b.select(1, 1)).clamp_min(0);
}

Tensor pairwise_iou(const Tensor& a, const Tensor& b) {
  if (a.size(0) == 0 || b.size(0) == 0) return torch::zeros({a.size(0), b.size(0)});
  auto lt = torch::maximum(a.index({Slice(), None, Slice(0, 2)}), b.index({None, Slice(), Slice(0, 2)}));
  auto rb = torch::minimum(a.index({Slice(), None, Slice(2, 4)}), b.index({None, Slice(), Slice(2, 4)}));
  auto wh = (rb - lt).clamp_min(0);
  auto inter = wh.select(2, 0) * wh.select(2, 1);
  auto uni = box_area(a).unsqueeze(1) + box_area(b).unsqueeze(0) - inter;
  return inter / uni.clamp_min(1e-9);
}

Tensor clip_boxes(const Tensor& b, double w, double h) {
  return torch::stack({b.select(1, 0).clamp(0, w), b.select(1, 1).clamp(0, h), b.select(1, 2).clamp(0, w),
                       b.select(1, 3).clamp(0, h)},
                      1);
}

struct BoxCoder {
  std::array<double, 4> weights{1, 1, 1, 1};

  Tensor encode(const Tensor& gt, const Tensor& ref) const {
    auto rw = ref.select(1, 2) - ref.select(1, 0), rh = ref.select(1, 3) - ref.select(1, 1);
    auto rx = ref.select(1, 0) + 0.5 * rw, ry = ref.select(1, 1) + 0.5 * rh;
    auto gw = gt.select(1, 2) - gt.select(1, 0), gh = gt.select(1, 3) - gt.select(1, 1);
    auto gx = gt.select(1, 0) + 0.5 * gw, gy = gt.select(1, 1) + 0.5 * gh;
    return torch::stack({weights[0] * (gx - rx) / rw, weights[1] * (gy - ry) / rh, weights[2] * torch::log(gw / rw),
                         weights[3] * torch::log(gh / rh)},
                        1);
  }

  Tensor decode(const Tensor& d, const Tensor& ref) const {
    auto rw = ref.select(1, 2) - ref.select(1, 0), rh = ref.select(1, 3) - ref.select(1, 1);
    auto rx = ref.select(1, 0) + 0.5 * rw, ry = ref.select(1, 1) + 0.5 * rh;
    auto cx = d.select(1, 0) / weights[0] * rw + rx;
    auto cy = d.select(1, 1) / weights[1] * rh + ry;
    auto w = torch::exp((d.select(1, 2) / weights[2]).clamp_max(kMaxLogScale)) * rw;
    auto h = torch::exp((d.select(1, 3) / weights[3]).clamp_max(kMaxLogScale)) * rh;
    return torch::stack({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}, 1);
  }
};

// ---------------------------------------------------------------------------
// losses (all return sums; callers normalize)

Tensor sigmoid_focal(const Tensor& logits, const Tensor& targets, double alpha = 0.25, double gamma = 2.0) {
  auto p = torch::sigmoid(logits);
  auto ce = torch::binary_cross_entropy_with_logits(logits, targets, {}, {}, at::Reduction::None);
  auto pt = p * targets + (1 - p) * (1 - targets);
  auto at = alpha * targets + (1 - alpha) * (1 - targets);
  return (at * ce * (1 - pt).pow(gamma)).sum();
}

Tensor giou_loss(const Tensor& p, const Tensor& g) {
  auto lt = torch::maximum(p.slice(1, 0, 2), g.slice(1, 0, 2));
  auto rb = torch::minimum(p.slice(1, 2, 4), g.slice(1, 2, 4));
  auto wh = (rb - lt).clamp_min(0);
  auto inter = wh.select(1, 0) * wh.select(1, 1);
  auto uni = box_area(p) + box_area(g) - inter;
  auto iou = inter / uni.clamp_min(1e-9);
  auto elt = torch::minimum(p.slice(1, 0, 2), g.slice(1, 0, 2));
  auto erb = torch::maximum(p.slice(1, 2, 4), g.slice(1, 2, 4));
  auto ewh = (erb - elt).clamp_min(0);
  auto enclose = (ewh.select(1, 0) * ewh.select(1, 1)).clamp_min(1e-9);
  return (1 - (iou - (enclose - uni) / enclose)).sum();
}

Tensor smooth_l1(const Tensor& diff, double beta = kSmoothL1Beta) {
  auto a = diff.abs();
  return torch::where(a < beta, 0.5 * a * a / beta, a - 0.5 * beta).sum();
}

// ---------------------------------------------------------------------------
// targets, candidates, detections

struct TargetTensors {
  Tensor boxes;   // [M, 4]
  Tensor labels;  // [M]
};

TargetTensors target_tensors(const ObjectSet& set) {
  const auto m = static_cast<std::int64_t>(set.objects.size());
  TargetTensors t{torch::zeros({m, 4}), torch::zeros({m}, torch::kLong)};
  auto b = t.boxes.accessor<float, 2>();
  auto l = t.labels.accessor<std::int64_t, 1>();
  for (std::int64_t i = 0; i < m; ++i) {
    const auto& o = set.objects[static_cast<std::size_t>(i)];
    b[i][0] = static_cast<float>(o.box.x_min);
    b[i][1] = static_cast<float>(o.box.y_min);
    b[i][2] = static_cast<float>(o.box.x_max);
    b[i][3] = static_cast<float>(o.box.y_max);
    l[i] = o.label;
  }
  return t;
}

void check_labels(const TargetTensors& t, std::int64_t classes) {
  if (t.labels.numel() && (t.labels.min().item<std::int64_t>() < 0 || t.labels.max().item<std::int64_t>() >= classes)) {
    throw ValidationError("target label outside [0, " + std::to_string(classes) + ")");
  }
}

struct Candidates {
  Tensor rows;    // index into the first dimension of the score matrix
  Tensor labels;
  Tensor scores;
};

// Entries of a [K, C] probability matrix above threshold, best top_k first.
Candidates select_candidates(const Tensor& probs, double threshold, std::int64_t top_k) {
  auto flat = probs.reshape({-1});
  auto keep = (flat > threshold).nonzero().squeeze(1);
  auto s = flat.index_select(0, keep);
  if (s.size(0) > top_k) {
    auto [values, idx] = s.topk(top_k);
    s = values;
    keep = keep.index_select(0, idx);
  }
  const auto c = probs.size(1);
  return {torch::div(keep, c, "floor"), keep.remainder(c), s};
}

ObjectSet to_object_set(const Tensor& boxes, const Tensor& scores, const Tensor& labels, double width,
                        double height, const DecodeOptions& opt) {
  ObjectSet raw;
  auto b = boxes.detach().to(torch::kFloat).contiguous();
  auto s = scores.detach().to(torch::kFloat).contiguous();
  auto l = labels.to(torch::kLong).contiguous();
  auto ba = b.accessor<float, 2>();
  auto sa = s.accessor<float, 1>();
  auto la = l.accessor<std::int64_t, 1>();
  for (std::int64_t i = 0; i < b.size(0); ++i) {
    BoundingBox box{ba[i][0], ba[i][1], ba[i][2], ba[i][3]};
    if (!std::isfinite(box.x_min) || !std::isfinite(box.y_min) || !std::isfinite(box.x_max) ||
        !std::isfinite(box.y_max)) {
      continue;
    }
    box = box.clipped(width, height);
    if (!(box.width() > 0 && box.height() > 0)) continue;
    raw.objects.push_back({box, static_cast<int>(la[i]), std::clamp(static_cast<double>(sa[i]), 0.0, 1.0)});
  }
  auto kept = nms(raw, opt.nms_iou);
  if (kept.objects.size() > static_cast<std::size_t>(std::max(0, opt.max_detections))) {
    kept.objects.resize(static_cast<std::size_t>(std::max(0, opt.max_detections)));
  }
  return kept;
}

// Greedy class-agnostic NMS; kept indices in descending score order.
Tensor nms_indices(const Tensor& boxes, const Tensor& scores, double threshold, std::int64_t limit) {
  auto order = std::get<1>(scores.sort(/*stable=*/true, 0, /*descending=*/true));
  auto sorted = boxes.index_select(0, order);
  auto iou = pairwise_iou(sorted, sorted).contiguous();
  auto ia = iou.accessor<float, 2>();
  std::vector<std::int64_t> kept;
  for (std::int64_t i = 0; i < sorted.size(0) && static_cast<std::int64_t>(kept.size()) < limit; ++i) {
    bool suppressed = false;
    for (auto k : kept) {
      if (ia[k][i] > threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  auto idx = torch::tensor(kept, torch::kLong);
  return order.index_select(0, idx);
}

// Cell centers of an fh x fw grid over an h x w image, row-major, [L, 2] as (x, y).
Tensor grid_centers(std::int64_t fh, std::int64_t fw, double h, double w) {
  auto ys = (torch::arange(fh, torch::kFloat) + 0.5) * (h / static_cast<double>(fh));
  auto xs = (torch::arange(fw, torch::kFloat) + 0.5) * (w / static_cast<double>(fw));
  auto mesh = torch::meshgrid({ys, xs}, "ij");
  return torch::stack({mesh[1].reshape({-1}), mesh[0].reshape({-1})}, 1);
}

// Anchors centred on each location, location-major: [L * A, 4].
Tensor make_anchors(const Tensor& centers, const std::vector<std::array<double, 2>>& shapes) {
  std::vector<float> half;
  for (const auto& s : shapes) {
    half.push_back(static_cast<float>(s[0] / 2));
    half.push_back(static_cast<float>(s[1] / 2));
  }
  auto hw = torch::tensor(half).view({1, static_cast<std::int64_t>(shapes.size()), 2});
  auto c = centers.unsqueeze(1);
  return torch::cat({c - hw, c + hw}, 2).reshape({-1, 4});
}

// Anchor shapes for the given size with aspect ratios h/w in {0.5, 1, 2}.
std::vector<std::array<double, 2>> ratio_shapes(double size) {
  std::vector<std::array<double, 2>> out;
  for (double r : {0.5, 1.0, 2.0}) out.push_back({size / std::sqrt(r), size * std::sqrt(r)});
  return out;
}

// [N, A*K, H, W] -> [N, H*W*A, K]
Tensor flatten_head(const Tensor& t, std::int64_t per_anchor) {
  const auto n = t.size(0), h = t.size(2), w = t.size(3);
  const auto a = t.size(1) / per_anchor;
  return t.view({n, a, per_anchor, h, w}).permute({0, 3, 4, 1, 2}).reshape({n, h * w * a, per_anchor});
}

// ---------------------------------------------------------------------------
// tiny_anchor_free

class TinyAnchorFree final : public DetectorModule {
 public:
  static constexpr std::int64_t kWidth = 32;
  static inline const std::vector<Stage> kStages = {{16, 2}, {32, 2}, {kWidth, 1}, {kWidth, 1}};

  TinyAnchorFree(std::int64_t in, std::int64_t classes) : DetectorModule(kTinyAnchorFree, in, classes, kTap) {
    backbone_ = register_module("backbone", make_backbone(in, kStages));
    tower_ = register_module("tower", ConvRelu(kWidth, kWidth, 1));
    cls_ = register_module("cls", make_conv(kWidth, classes, 3));
    reg_ = register_module("reg", make_conv(kWidth, 4, 3));
    init_prediction(cls_, 0.01, kFocalPriorBias);
    init_prediction(reg_, 0.01, 0.0);
  }

  Tensor features(const Tensor& x) override { return run_stages(backbone_, "backbone", x); }

  ForwardOutput forward(const Tensor& x, const std::vector<ObjectSet>* targets,
                        const DecodeOptions& decode) override {
    ForwardOutput out;
    out.features = features(x);
    auto t = tower_->forward(out.features);
    auto cls = cls_->forward(t), reg = reg_->forward(t);
    const double h = static_cast<double>(x.size(2)), w = static_cast<double>(x.size(3));
    auto centers = grid_centers(cls.size(2), cls.size(3), h, w);
    const double sx = w / static_cast<double>(cls.size(3)), sy = h / static_cast<double>(cls.size(2));
    auto logits = flatten_head(cls, class_count());
    auto deltas = flatten_head(reg, 4);
    if (targets) out.losses = losses(logits, deltas, centers, sx, sy, *targets);
    if (!is_training()) {
      torch::NoGradGuard no_grad;
      for (std::int64_t i = 0; i < x.size(0); ++i) {
        auto cand = select_candidates(torch::sigmoid(logits[i]), decode.score_threshold, decode.pre_nms_top_k);
        auto boxes = to_boxes(deltas[i].index_select(0, cand.rows), centers.index_select(0, cand.rows), sx, sy);
        out.detections.push_back(to_object_set(boxes, cand.scores, cand.labels, w, h, decode));
      }
    }
    return out;
  }

  ScoresWithTap scores_with_tap(const Tensor& x) override {
    auto tap = features(x);
    auto cls = cls_->forward(tower_->forward(tap));
    return {torch::sigmoid(cls).reshape({x.size(0), -1}), tap};
  }

  std::string input_weight_name() const override { return kInputWeight; }

  std::optional<std::vector<LayerCost>> layer_costs(std::int64_t h, std::int64_t w) const override {
    CostWalk walk;
    walk.backbone(input_channels(), kStages, h, w);
    walk.conv("tower", kWidth, kWidth, 3, h, w);
    walk.conv("cls", kWidth, class_count(), 3, h, w);
    walk.conv("reg", kWidth, 4, 3, h, w);
    return walk.take();
  }

 private:
  static Tensor to_boxes(const Tensor& deltas, const Tensor& centers, double sx, double sy) {
    auto d = torch::exp(deltas.clamp_max(6.0));
    auto cx = centers.select(1, 0), cy = centers.select(1, 1);
    return torch::stack({cx - d.select(1, 0) * sx, cy - d.select(1, 1) * sy, cx + d.select(1, 2) * sx,
                         cy + d.select(1, 3) * sy},
                        1);
  }

  // Location -> target index (-1 = background). A location inside several
  // boxes takes the smallest; a box containing no location center takes its
  // nearest free location.
  static Tensor assign(const Tensor& centers, const Tensor& boxes) {
    const auto l = centers.size(0);
    if (boxes.size(0) == 0) return torch::full({l}, -1, torch::kLong);
    auto cx = centers.select(1, 0).unsqueeze(1), cy = centers.select(1, 1).unsqueeze(1);
    auto inside = (cx > boxes.select(1, 0).unsqueeze(0)) & (cx < boxes.select(1, 2).unsqueeze(0)) &
                  (cy > boxes.select(1, 1).unsqueeze(0)) & (cy < boxes.select(1, 3).unsqueeze(0));
    auto area = box_area(boxes).unsqueeze(0).expand({l, boxes.size(0)});
    auto masked = torch::where(inside, area, torch::full_like(area, std::numeric_limits<float>::infinity()));
    auto [minv, idx] = masked.min(1);
    auto result = torch::where(torch::isinf(minv), torch::full_like(idx, -1), idx);
    auto covered = inside.any(0);
    for (std::int64_t m = 0; m < boxes.size(0); ++m) {
      if (covered[m].item<bool>()) continue;
      auto gx = (boxes[m][0] + boxes[m][2]) * 0.5, gy = (boxes[m][1] + boxes[m][3]) * 0.5;
      auto d = (centers.select(1, 0) - gx).pow(2) + (centers.select(1, 1) - gy).pow(2);
      const auto nearest = d.argmin().item<std::int64_t>();
      if (result[nearest].item<std::int64_t>() < 0) result[nearest] = m;
    }
    return result;
  }

  LossDict losses(const Tensor& logits, const Tensor& deltas, const Tensor& centers, double sx, double sy,
                  const std::vector<ObjectSet>& targets) {
    auto cls_sum = torch::zeros({});
    auto box_sum = torch::zeros({});
    std::int64_t positives = 0;
    for (std::int64_t i = 0; i < logits.size(0); ++i) {
      auto t = target_tensors(targets[static_cast<std::size_t>(i)]);
      check_labels(t, class_count());
      auto cls_t = torch::zeros({logits.size(1), class_count()});
      auto owner = assign(centers, t.boxes);
      auto pos = (owner >= 0).nonzero().squeeze(1);
      if (pos.numel()) {
        auto which = owner.index_select(0, pos);
        cls_t.index_put_({pos, t.labels.index_select(0, which)}, 1.0);
        auto pred = to_boxes(deltas[i].index_select(0, pos), centers.index_select(0, pos), sx, sy);
        box_sum = box_sum + giou_loss(pred, t.boxes.index_select(0, which));
        positives += pos.numel();
      }
      cls_sum = cls_sum + sigmoid_focal(logits[i], cls_t);
    }
    const double norm = static_cast<double>(std::max<std::int64_t>(1, positives));
    return {{"cls", cls_sum / norm}, {"box", box_sum / norm}};
  }

  torch::nn::Sequential backbone_{nullptr};
  ConvRelu tower_{nullptr};
  torch::nn::Conv2d cls_{nullptr};
  torch::nn::Conv2d reg_{nullptr};
};

// ---------------------------------------------------------------------------
// mini_retinanet

struct PyramidNeckImpl : torch::nn::Module {
  PyramidNeckImpl(std::int64_t lo_in, std::int64_t hi_in, std::int64_t width)
      : lateral_lo(register_module("lateral_lo", make_conv(lo_in, width, 1))),
        lateral_hi(register_module("lateral_hi", make_conv(hi_in, width, 1))),
        smooth_lo(register_module("smooth_lo", make_conv(width, width, 3))),
        smooth_hi(register_module("smooth_hi", make_conv(width, width, 3))) {}

  std::pair<Tensor, Tensor> forward(const Tensor& lo, const Tensor& hi) {
    auto top = lateral_hi->forward(hi);
    auto up = F::interpolate(top, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{lo.size(2), lo.size(3)})
                                      .mode(torch::kNearest));
    return {smooth_lo->forward(lateral_lo->forward(lo) + up), smooth_hi->forward(top)};
  }

  torch::nn::Conv2d lateral_lo, lateral_hi, smooth_lo, smooth_hi;
};
TORCH_MODULE(PyramidNeck);

struct RetinaHeadImpl : torch::nn::Module {
  RetinaHeadImpl(std::int64_t width, std::int64_t anchors, std::int64_t classes)
      : cls_tower(register_module("cls_tower", ConvRelu(width, width, 1))),
        cls_logits(register_module("cls_logits", make_conv(width, anchors * classes, 3))),
        box_tower(register_module("box_tower", ConvRelu(width, width, 1))),
        box_reg(register_module("box_reg", make_conv(width, anchors * 4, 3))) {
    init_prediction(cls_logits, 0.01, kFocalPriorBias);
    init_prediction(box_reg, 0.01, 0.0);
  }

  ConvRelu cls_tower;
  torch::nn::Conv2d cls_logits;
  ConvRelu box_tower;
  torch::nn::Conv2d box_reg;
};
TORCH_MODULE(RetinaHead);

class MiniRetinaNet final : public DetectorModule {
 public:
  static constexpr std::int64_t kWidth = 32;
  static constexpr std::int64_t kAnchors = 3;
  static inline const std::vector<Stage> kStages = {{16, 2}, {32, 2}, {48, 2}, {48, 1}};

  MiniRetinaNet(std::int64_t in, std::int64_t classes) : DetectorModule(kMiniRetinaNet, in, classes, kTap) {
    backbone_ = register_module("backbone", make_backbone(in, kStages));
    neck_ = register_module("neck", PyramidNeck(kStages[1].channels, kStages[3].channels, kWidth));
    head_ = register_module("head", RetinaHead(kWidth, kAnchors, classes));
  }

  Tensor features(const Tensor& x) override { return run_stages(backbone_, "backbone", x); }

  ForwardOutput forward(const Tensor& x, const std::vector<ObjectSet>* targets,
                        const DecodeOptions& decode) override {
    ForwardOutput out;
    auto levels = run(x, out.features);
    const double h = static_cast<double>(x.size(2)), w = static_cast<double>(x.size(3));
    if (targets) out.losses = losses(levels, *targets);
    if (!is_training()) {
      torch::NoGradGuard no_grad;
      for (std::int64_t i = 0; i < x.size(0); ++i) {
        std::vector<Tensor> boxes, scores, labels;
        for (const auto& lv : levels) {
          auto cand = select_candidates(torch::sigmoid(lv.logits[i]), decode.score_threshold, decode.pre_nms_top_k);
          boxes.push_back(coder_.decode(lv.deltas[i].index_select(0, cand.rows), lv.anchors.index_select(0, cand.rows)));
          scores.push_back(cand.scores);
          labels.push_back(cand.labels);
        }
        out.detections.push_back(
            to_object_set(torch::cat(boxes), torch::cat(scores), torch::cat(labels), w, h, decode));
      }
    }
    return out;
  }

  ScoresWithTap scores_with_tap(const Tensor& x) override {
    Tensor tap;
    auto levels = run(x, tap);
    std::vector<Tensor> parts;
    for (const auto& lv : levels) parts.push_back(torch::sigmoid(lv.logits).reshape({x.size(0), -1}));
    return {torch::cat(parts, 1), tap};
  }

  std::string input_weight_name() const override { return kInputWeight; }

  std::optional<std::vector<LayerCost>> layer_costs(std::int64_t h, std::int64_t w) const override {
    CostWalk walk;
    std::vector<std::array<std::int64_t, 2>> sizes;
    walk.backbone(input_channels(), kStages, h, w, &sizes);
    const auto lo = sizes[1], hi = sizes[3];
    walk.conv("neck.lateral_lo", kStages[1].channels, kWidth, 1, lo[0], lo[1]);
    walk.conv("neck.lateral_hi", kStages[3].channels, kWidth, 1, hi[0], hi[1]);
    walk.conv("neck.smooth_lo", kWidth, kWidth, 3, lo[0], lo[1]);
    walk.conv("neck.smooth_hi", kWidth, kWidth, 3, hi[0], hi[1]);
    for (const auto& s : {lo, hi}) {
      walk.conv("head.cls_tower", kWidth, kWidth, 3, s[0], s[1]);
      walk.conv("head.cls_logits", kWidth, kAnchors * class_count(), 3, s[0], s[1]);
      walk.conv("head.box_tower", kWidth, kWidth, 3, s[0], s[1]);
      walk.conv("head.box_reg", kWidth, kAnchors * 4, 3, s[0], s[1]);
    }
    return walk.take();
  }

 private:
  struct Level {
    Tensor logits;   // [N, K, C]
    Tensor deltas;   // [N, K, 4]
    Tensor anchors;  // [K, 4]
  };

  std::vector<Level> run(const Tensor& x, Tensor& tap) {
    std::vector<Tensor> stages;
    tap = run_stages(backbone_, "backbone", x, &stages);
    auto [p_lo, p_hi] = neck_->forward(stages[1], tap);
    std::vector<Level> levels;
    const double h = static_cast<double>(x.size(2)), w = static_cast<double>(x.size(3));
    for (const auto& p : {p_lo, p_hi}) {
      Level lv;
      lv.logits = flatten_head(head_->cls_logits->forward(head_->cls_tower->forward(p)), class_count());
      lv.deltas = flatten_head(head_->box_reg->forward(head_->box_tower->forward(p)), 4);
      const double stride = w / static_cast<double>(p.size(3));
      lv.anchors = make_anchors(grid_centers(p.size(2), p.size(3), h, w), ratio_shapes(3.0 * stride));
      levels.push_back(std::move(lv));
    }
    return levels;
  }

  LossDict losses(const std::vector<Level>& levels, const std::vector<ObjectSet>& targets) {
    std::vector<Tensor> a_parts, l_parts, d_parts;
    for (const auto& lv : levels) {
      a_parts.push_back(lv.anchors);
      l_parts.push_back(lv.logits);
      d_parts.push_back(lv.deltas);
    }
    auto anchors = torch::cat(a_parts);
    auto logits = torch::cat(l_parts, 1), deltas = torch::cat(d_parts, 1);
    const auto k = anchors.size(0);
    auto cls_sum = torch::zeros({}), box_sum = torch::zeros({});
    std::int64_t positives = 0;
    for (std::int64_t i = 0; i < logits.size(0); ++i) {
      auto t = target_tensors(targets[static_cast<std::size_t>(i)]);
      check_labels(t, class_count());
      auto cls_t = torch::zeros({k, class_count()});
      auto valid = torch::ones({k}, torch::kBool);
      if (t.boxes.size(0) > 0) {
        auto iou = pairwise_iou(anchors, t.boxes);
        auto [maxv, owner] = iou.max(1);
        auto pos = maxv >= 0.5;
        auto best = iou.argmax(0);
        pos.index_put_({best}, true);
        owner.index_put_({best}, torch::arange(t.boxes.size(0), torch::kLong));
        valid = pos | (maxv < 0.4);
        auto idx = pos.nonzero().squeeze(1);
        auto which = owner.index_select(0, idx);
        cls_t.index_put_({idx, t.labels.index_select(0, which)}, 1.0);
        auto enc = coder_.encode(t.boxes.index_select(0, which), anchors.index_select(0, idx));
        box_sum = box_sum + smooth_l1(deltas[i].index_select(0, idx) - enc);
        positives += idx.numel();
      }
      auto keep = valid.nonzero().squeeze(1);
      cls_sum = cls_sum + sigmoid_focal(logits[i].index_select(0, keep), cls_t.index_select(0, keep));
    }
    const double norm = static_cast<double>(std::max<std::int64_t>(1, positives));
    return {{"cls", cls_sum / norm}, {"box", box_sum / norm}};
  }

  BoxCoder coder_;
  torch::nn::Sequential backbone_{nullptr};
  PyramidNeck neck_{nullptr};
  RetinaHead head_{nullptr};
};

// ---------------------------------------------------------------------------
// mini_faster_rcnn

struct RpnImpl : torch::nn::Module {
  RpnImpl(std::int64_t width, std::int64_t anchors)
      : conv(register_module("conv", ConvRelu(width, width, 1))),
        objectness(register_module("objectness", make_conv(width, anchors, 1))),
        deltas(register_module("deltas", make_conv(width, anchors * 4, 1))) {
    init_prediction(objectness, 0.01, 0.0);
    init_prediction(deltas, 0.01, 0.0);
  }
  ConvRelu conv;
  torch::nn::Conv2d objectness;
  torch::nn::Conv2d deltas;
};
TORCH_MODULE(Rpn);

struct RoiHeadImpl : torch::nn::Module {
  RoiHeadImpl(std::int64_t in, std::int64_t hidden, std::int64_t classes)
      : fc1(register_module("fc1", torch::nn::Linear(in, hidden))),
        fc2(register_module("fc2", torch::nn::Linear(hidden, hidden))),
        cls(register_module("cls", torch::nn::Linear(hidden, classes + 1))),
        box(register_module("box", torch::nn::Linear(hidden, 4))) {
    init_prediction(cls, 0.01, 0.0);
    init_prediction(box, 0.001, 0.0);
  }
  std::pair<Tensor, Tensor> forward(const Tensor& pooled) {
    auto h = torch::relu(fc2->forward(torch::relu(fc1->forward(pooled))));
    return {cls->forward(h), box->forward(h)};
  }
  torch::nn::Linear fc1, fc2, cls, box;
};
TORCH_MODULE(RoiHead);

class MiniFasterRcnn final : public DetectorModule {
 public:
  static constexpr std::int64_t kWidth = 32;
  static constexpr std::int64_t kPool = 7;
  static constexpr std::int64_t kHidden = 128;
  static constexpr std::int64_t kAnchors = 3;
  static constexpr std::int64_t kRpnBatch = 128;
  static constexpr std::int64_t kRoiBatch = 64;
  static inline const std::vector<Stage> kStages = {{16, 2}, {32, 2}, {48, 1}, {48, 1}};

  MiniFasterRcnn(std::int64_t in, std::int64_t classes) : DetectorModule(kMiniFasterRcnn, in, classes, kTap) {
    backbone_ = register_module("backbone", make_backbone(in, kStages));
    torch::nn::Sequential neck;
    neck->push_back("lateral", make_conv(kStages.back().channels, kWidth, 1));
    neck->push_back("smooth", make_conv(kWidth, kWidth, 3));
    neck_ = register_module("neck", neck);
    rpn_ = register_module("rpn", Rpn(kWidth, kAnchors));
    roi_ = register_module("roi", RoiHead(kWidth * kPool * kPool, kHidden, classes));
  }

  Tensor features(const Tensor& x) override { return run_stages(backbone_, "backbone", x); }

  ForwardOutput forward(const Tensor& x, const std::vector<ObjectSet>* targets,
                        const DecodeOptions& decode) override {
    ForwardOutput out;
    auto st = run(x, out.features);
    if (targets) out.losses = losses(st, *targets);
    if (!is_training()) {
      torch::NoGradGuard no_grad;
      for (std::int64_t i = 0; i < x.size(0); ++i) {
        auto [logits, deltas] = roi_->forward(roi_align(st.map[i], st.proposals[static_cast<std::size_t>(i)], st.w, st.h));
        auto probs = torch::softmax(logits, 1).slice(1, 1);
        auto boxes = roi_coder_.decode(deltas, st.proposals[static_cast<std::size_t>(i)]);
        auto cand = select_candidates(probs, decode.score_threshold, decode.pre_nms_top_k);
        out.detections.push_back(
            to_object_set(boxes.index_select(0, cand.rows), cand.scores, cand.labels, st.w, st.h, decode));
      }
    }
    return out;
  }

  ScoresWithTap scores_with_tap(const Tensor& x) override {
    Tensor tap;
    auto st = run(x, tap);
    std::vector<Tensor> rows;
    std::int64_t longest = 0;
    for (std::int64_t i = 0; i < x.size(0); ++i) {
      auto logits = roi_->forward(roi_align(st.map[i], st.proposals[static_cast<std::size_t>(i)], st.w, st.h)).first;
      rows.push_back(torch::softmax(logits, 1).slice(1, 1).reshape({-1}));
      longest = std::max(longest, rows.back().size(0));
    }
    for (auto& r : rows) r = F::pad(r, F::PadFuncOptions({0, longest - r.size(0)}));
    return {torch::stack(rows), tap};
  }

  std::string input_weight_name() const override { return kInputWeight; }

  std::optional<std::vector<LayerCost>> layer_costs(std::int64_t h, std::int64_t w) const override {
    CostWalk walk;
    walk.backbone(input_channels(), kStages, h, w);
    walk.conv("neck.lateral", kStages.back().channels, kWidth, 1, h, w);
    walk.conv("neck.smooth", kWidth, kWidth, 3, h, w);
    walk.conv("rpn.conv", kWidth, kWidth, 3, h, w);
    walk.conv("rpn.objectness", kWidth, kAnchors, 1, h, w);
    walk.conv("rpn.deltas", kWidth, kAnchors * 4, 1, h, w);
    const std::int64_t rois = kEvalPostNms;
    walk.linear("roi.fc1", kWidth * kPool * kPool, kHidden, rois);
    walk.linear("roi.fc2", kHidden, kHidden, rois);
    walk.linear("roi.cls", kHidden, class_count() + 1, rois);
    walk.linear("roi.box", kHidden, 4, rois);
    return walk.take();
  }

 private:
  static constexpr std::int64_t kTrainPreNms = 600, kEvalPreNms = 300;
  static constexpr std::int64_t kTrainPostNms = 100, kEvalPostNms = 50;

  struct State {
    Tensor map;          // neck output [N, C, h, w]
    Tensor objectness;   // [N, K]
    Tensor deltas;       // [N, K, 4]
    Tensor anchors;      // [K, 4]
    std::vector<Tensor> proposals;  // per image [P, 4], no grad
    double w = 0, h = 0;
  };

  State run(const Tensor& x, Tensor& tap) {
    State st;
    tap = run_stages(backbone_, "backbone", x);
    st.map = neck_->forward(tap);
    auto r = rpn_->conv->forward(st.map);
    st.objectness = flatten_head(rpn_->objectness->forward(r), 1).squeeze(2);
    st.deltas = flatten_head(rpn_->deltas->forward(r), 4);
    st.h = static_cast<double>(x.size(2));
    st.w = static_cast<double>(x.size(3));
    const double stride = st.w / static_cast<double>(st.map.size(3));
    st.anchors = make_anchors(grid_centers(st.map.size(2), st.map.size(3), st.h, st.w),
                              {{2 * stride, 2 * stride}, {4 * stride, 4 * stride}, {6 * stride, 6 * stride}});
    const bool train = is_training();
    torch::NoGradGuard no_grad;
    for (std::int64_t i = 0; i < x.size(0); ++i) {
      auto boxes = clip_boxes(rpn_coder_.decode(st.deltas[i].detach(), st.anchors), st.w, st.h);
      auto scores = st.objectness[i].detach();
      auto ok = ((boxes.select(1, 2) - boxes.select(1, 0) >= 1) & (boxes.select(1, 3) - boxes.select(1, 1) >= 1))
                    .nonzero()
                    .squeeze(1);
      boxes = boxes.index_select(0, ok);
      scores = scores.index_select(0, ok);
      const auto pre = std::min<std::int64_t>(train ? kTrainPreNms : kEvalPreNms, scores.size(0));
      auto top = std::get<1>(scores.topk(pre));
      boxes = boxes.index_select(0, top);
      scores = scores.index_select(0, top);
      auto kept = nms_indices(boxes, scores, 0.7, train ? kTrainPostNms : kEvalPostNms);
      st.proposals.push_back(boxes.index_select(0, kept));
    }
    return st;
  }

  // Bilinear RoI pooling to kPool x kPool samples per box: [R, C * kPool^2].
  static Tensor roi_align(const Tensor& map, const Tensor& boxes, double w, double h) {
    const auto r = boxes.size(0);
    if (r == 0) return torch::zeros({0, map.size(0) * kPool * kPool});
    auto t = (torch::arange(kPool, torch::kFloat) + 0.5) / static_cast<double>(kPool);
    auto bw = (boxes.select(1, 2) - boxes.select(1, 0)).unsqueeze(1);
    auto bh = (boxes.select(1, 3) - boxes.select(1, 1)).unsqueeze(1);
    auto xs = (boxes.select(1, 0).unsqueeze(1) + t.unsqueeze(0) * bw) / w * 2 - 1;
    auto ys = (boxes.select(1, 1).unsqueeze(1) + t.unsqueeze(0) * bh) / h * 2 - 1;
    auto grid = torch::stack({xs.unsqueeze(1).expand({r, kPool, kPool}), ys.unsqueeze(2).expand({r, kPool, kPool})}, 3);
    auto input = map.unsqueeze(0).expand({r, map.size(0), map.size(1), map.size(2)}).contiguous();
    auto pooled = F::grid_sample(input, grid,
                                 F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(false));
    return pooled.reshape({r, -1});
  }

  LossDict losses(const State& st, const std::vector<ObjectSet>& targets) {
    const auto n = st.map.size(0);
    auto rpn_obj = torch::zeros({}), rpn_box = torch::zeros({});
    auto roi_cls = torch::zeros({}), roi_box = torch::zeros({});
    for (std::int64_t i = 0; i < n; ++i) {
      auto t = target_tensors(targets[static_cast<std::size_t>(i)]);
      check_labels(t, class_count());
      const auto m = t.boxes.size(0);

      // region proposal targets
      const auto k = st.anchors.size(0);
      auto labels = torch::full({k}, -1, torch::kLong);
      Tensor owner = torch::zeros({k}, torch::kLong), maxv = torch::zeros({k});
      if (m == 0) {
        labels.fill_(0);
      } else {
        auto iou = pairwise_iou(st.anchors, t.boxes);
        std::tie(maxv, owner) = iou.max(1);
        labels.masked_fill_(maxv < 0.3, 0);
        labels.masked_fill_(maxv >= 0.7, 1);
        auto best = std::get<0>(iou.max(0, true));
        auto ties = ((iou == best) & (best > 0)).any(1);
        labels.masked_fill_(ties, 1);
      }
      auto pos = (labels == 1).nonzero().squeeze(1);
      pos = pos.index_select(0, std::get<1>(maxv.index_select(0, pos).sort(true, 0, true)))
                .slice(0, 0, kRpnBatch / 2);
      auto neg = (labels == 0).nonzero().squeeze(1);
      auto hardness = st.objectness[i].detach().index_select(0, neg);
      neg = neg.index_select(0, std::get<1>(hardness.sort(true, 0, true))).slice(0, 0, kRpnBatch - pos.size(0));
      auto sampled = torch::cat({pos, neg});
      auto obj_t = torch::cat({torch::ones({pos.size(0)}), torch::zeros({neg.size(0)})});
      rpn_obj = rpn_obj + torch::binary_cross_entropy_with_logits(st.objectness[i].index_select(0, sampled), obj_t);
      if (pos.numel()) {
        auto enc = rpn_coder_.encode(t.boxes.index_select(0, owner.index_select(0, pos)),
                                     st.anchors.index_select(0, pos));
        rpn_box = rpn_box +
                  smooth_l1(st.deltas[i].index_select(0, pos) - enc) / static_cast<double>(sampled.size(0));
      }

      // RoI targets; ground truth joins the proposals
      auto props = torch::cat({st.proposals[static_cast<std::size_t>(i)], t.boxes});
      auto roi_labels = torch::zeros({props.size(0)}, torch::kLong);
      Tensor roi_owner = torch::zeros({props.size(0)}, torch::kLong), roi_max = torch::zeros({props.size(0)});
      if (m > 0) {
        std::tie(roi_max, roi_owner) = pairwise_iou(props, t.boxes).max(1);
        roi_labels = torch::where(roi_max >= 0.5, t.labels.index_select(0, roi_owner) + 1, roi_labels);
      }
      auto fg = (roi_labels > 0).nonzero().squeeze(1);
      fg = fg.index_select(0, std::get<1>(roi_max.index_select(0, fg).sort(true, 0, true))).slice(0, 0, kRoiBatch / 4);
      auto bg = (roi_labels == 0).nonzero().squeeze(1).slice(0, 0, kRoiBatch - fg.size(0));
      auto pick = torch::cat({fg, bg});
      auto boxes = props.index_select(0, pick);
      auto [logits, deltas] = roi_->forward(roi_align(st.map[i], boxes, st.w, st.h));
      roi_cls = roi_cls + F::cross_entropy(logits, roi_labels.index_select(0, pick));
      if (fg.numel()) {
        const auto nf = fg.size(0);
        auto enc = roi_coder_.encode(t.boxes.index_select(0, roi_owner.index_select(0, fg)), boxes.slice(0, 0, nf));
        roi_box = roi_box + smooth_l1(deltas.slice(0, 0, nf) - enc) / static_cast<double>(pick.size(0));
      }
    }
    const double norm = static_cast<double>(n);
    return {{"rpn_objectness", rpn_obj / norm},
            {"rpn_box", rpn_box / norm},
            {"roi_cls", roi_cls / norm},
            {"roi_box", roi_box / norm}};
  }

  BoxCoder rpn_coder_;
  BoxCoder roi_coder_{{10, 10, 5, 5}};
  torch::nn::Sequential backbone_{nullptr};
  torch::nn::Sequential neck_{nullptr};
  Rpn rpn_{nullptr};
  RoiHead roi_{nullptr};
};

}  // namespace

void register_builtin_adapters(Registry& registry) {
  registry.add(kTinyAnchorFree, [](std::int64_t in, std::int64_t c) -> std::shared_ptr<DetectorModule> {
    return std::make_shared<TinyAnchorFree>(in, c);
  });
  registry.add(kMiniRetinaNet, [](std::int64_t in, std::int64_t c) -> std::shared_ptr<DetectorModule> {
    return std::make_shared<MiniRetinaNet>(in, c);
  });
  registry.add(kMiniFasterRcnn, [](std::int64_t in, std::int64_t c) -> std::shared_ptr<DetectorModule> {
    return std::make_shared<MiniFasterRcnn>(in, c);
  });
}

}  // namespace lupidet::detection
