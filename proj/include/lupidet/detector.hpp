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

// Model-agnostic detector abstraction. Each architecture is an adapter that
// runs its backbone as a list of named stages; the stage named by the
// adapter's tap point is captured during the forward pass and returned
// alongside detections or losses. Teacher networks are produced from
// student-shaped ones by widening the first convolution to four channels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "lupidet/dataset.hpp"
#include "lupidet/types.hpp"

namespace lupidet::detection {

/// Named loss components; the detection loss is their sum.
using LossDict = std::map<std::string, torch::Tensor>;

torch::Tensor total_loss(const LossDict& losses);

struct ForwardOutput {
  LossDict losses;                     // filled when targets are supplied
  std::vector<ObjectSet> detections;   // filled in eval mode (model frame)
  torch::Tensor features;              // tap activation [N, C, H, W]
};

/// Flattened tap activation of one image.
struct FeatureVector {
  std::vector<float> values;
  std::array<std::int64_t, 3> source_shape{};  // channels, height, width

  /// One vector per image of an [N, C, H, W] tensor.
  static std::vector<FeatureVector> from_batch(const torch::Tensor& features);
};

struct DecodeOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
  int pre_nms_top_k = 300;
};

/// Multiply-accumulate cost of one layer at a given input resolution.
struct LayerCost {
  std::string name;
  double macs = 0;
};

/// Class scores with the tap activation still attached to the graph.
struct ScoresWithTap {
  torch::Tensor scores;    // [N, K] per-image candidate class probabilities
  torch::Tensor features;  // [N, C, H, W]
};

class DetectorModule : public torch::nn::Module {
 public:
  DetectorModule(std::string architecture_id, std::int64_t input_channels, std::int64_t class_count,
                 std::string tap_point_id);

  const std::string& architecture_id() const { return architecture_id_; }
  std::int64_t input_channels() const { return input_channels_; }
  std::int64_t class_count() const { return class_count_; }
  const std::string& tap_point_id() const { return tap_point_id_; }

  /// Backbone up to and including the tap stage.
  virtual torch::Tensor features(const torch::Tensor& x) = 0;

  /// Full pass from an input batch [N, C, S, S]. Losses are computed when
  /// targets (model frame) are given; detections are decoded when the module
  /// is in eval mode.
  virtual ForwardOutput forward(const torch::Tensor& x, const std::vector<ObjectSet>* targets,
                                const DecodeOptions& decode) = 0;

  virtual ScoresWithTap scores_with_tap(const torch::Tensor& x) = 0;

  /// Name of the first convolution's weight in named_parameters().
  virtual std::string input_weight_name() const = 0;

  /// Layer-walk MAC estimate, or nullopt when the adapter cannot provide one.
  virtual std::optional<std::vector<LayerCost>> layer_costs(std::int64_t height, std::int64_t width) const {
    return std::nullopt;
  }

  /// Parameter group ("backbone", "neck", "head") of a parameter name.
  virtual std::string parameter_group(const std::string& name) const;

 protected:
  // Runs the named stages in order and returns the tap stage's output. The
  // captured tensor is the live activation, not a copy. Every stage output
  // is appended to `outputs` when given.
  torch::Tensor run_stages(torch::nn::Sequential& stages, const std::string& prefix, torch::Tensor x,
                           std::vector<torch::Tensor>* outputs = nullptr);

 private:
  std::string architecture_id_;
  std::int64_t input_channels_;
  std::int64_t class_count_;
  std::string tap_point_id_;
};

using ModuleFactory =
    std::function<std::shared_ptr<DetectorModule>(std::int64_t input_channels, std::int64_t class_count)>;

/// Adapter registry keyed by architecture id.
class Registry {
 public:
  static Registry& instance();
  void add(const std::string& id, ModuleFactory factory);
  std::shared_ptr<DetectorModule> create(const std::string& id, std::int64_t input_channels,
                                         std::int64_t class_count) const;
  std::vector<std::string> ids() const;
  bool contains(const std::string& id) const;

 private:
  Registry();
  std::map<std::string, ModuleFactory> factories_;
};

std::vector<std::string> registered_architectures();

/// Owning handle over one detector. A handle is single-writer: training
/// mutates it and must be serialized externally. Eval-mode forwards on a
/// frozen handle may run concurrently since tap capture keeps no state
/// between calls.
class DetectorHandle {
 public:
  DetectorHandle() = default;
  explicit DetectorHandle(std::shared_ptr<DetectorModule> module);

  const std::string& architecture_id() const { return module_->architecture_id(); }
  std::int64_t input_channels() const { return module_->input_channels(); }
  std::int64_t class_count() const { return module_->class_count(); }
  const std::string& tap_point_id() const { return module_->tap_point_id(); }
  std::int64_t parameter_count() const;

  DetectorModule& module() { return *module_; }
  const DetectorModule& module() const { return *module_; }
  std::shared_ptr<DetectorModule> module_ptr() const { return module_; }
  bool valid() const { return module_ != nullptr; }

  void train(bool on = true) { module_->train(on); }
  void eval() { module_->eval(); }
  bool is_training() const { return module_->is_training(); }

  /// Enables or disables gradients for a parameter group.
  void set_trainable(const std::string& group, bool trainable);
  std::map<std::string, bool> trainable_groups() const;
  /// Disables gradients for every parameter.
  void freeze();

  ForwardOutput forward_with_tap(const torch::Tensor& batch, const std::vector<ObjectSet>* targets = nullptr,
                                 const DecodeOptions& decode = {});

  /// Deep copy with identical parameters.
  DetectorHandle clone() const;

  /// Hex digest over every parameter and buffer (names, shapes, bytes).
  std::string parameter_digest() const;

 private:
  std::shared_ptr<DetectorModule> module_;
};

/// Builds a 3-channel detector. Initialization is seeded. With pretrained
/// set, weights are read from $LUPIDET_WEIGHTS_DIR/<id>.pt and their absence
/// is an error.
DetectorHandle build_detector(const std::string& architecture_id, std::int64_t class_count, bool pretrained,
                              std::uint64_t seed = 0);

/// Returns a 4-channel copy: RGB weights of the first convolution copied
/// bitwise, the new channel's slice drawn from Kaiming normal with fan-in
/// over the full 4-channel receptive field, every other tensor copied.
DetectorHandle extend_input_channels(const DetectorHandle& handle, std::uint64_t seed = 0);

/// Stacks prepared samples into [N, C, S, S], keeping the first `channels`.
torch::Tensor stack_batch(const std::vector<const data::PreparedSample*>& samples, std::int64_t channels);

// --- checkpoints -----------------------------------------------------------

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

/// Metadata stored with every checkpoint.
struct CheckpointInfo {
  std::int64_t format_version = kCheckpointFormatVersion;
  std::string architecture_id;
  std::int64_t input_channels = 3;
  std::int64_t class_count = 0;
  std::string tap_point_id;
  // training bookkeeping (optional)
  std::int64_t epoch = 0;
  double best_metric = 0;
  std::int64_t epochs_since_best = 0;
  std::string role;
  double alpha = 0;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const DetectorHandle& handle, CheckpointInfo info,
                     torch::optim::Optimizer* optimizer = nullptr);

/// Reads metadata only.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads parameters into an existing handle. Architecture, class count and
/// input channel count must match the handle exactly.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, DetectorHandle& handle,
                               torch::optim::Optimizer* optimizer = nullptr);

/// Builds the matching detector and loads the checkpoint into it.
DetectorHandle load_detector(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Serialized size in bytes of the inference checkpoint (parameters and
/// metadata only).
std::size_t serialized_size(const DetectorHandle& handle);

}  // namespace lupidet::detection
