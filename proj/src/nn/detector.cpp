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
#include "lupidet/detector.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "lupidet/error.hpp"
#include "lupidet/adapters.hpp"

namespace lupidet::detection {

torch::Tensor total_loss(const LossDict& losses) {
  torch::Tensor sum;
  for (const auto& [name, value] : losses) sum = sum.defined() ? sum + value : value;
  if (!sum.defined()) throw ValidationError("empty loss dictionary");
  return sum;
}

std::vector<FeatureVector> FeatureVector::from_batch(const torch::Tensor& features) {
  if (features.dim() != 4) throw ValidationError("tap features must be [N, C, H, W]");
  auto cpu = features.detach().to(torch::kCPU, torch::kFloat).contiguous();
  std::vector<FeatureVector> out;
  for (std::int64_t i = 0; i < cpu.size(0); ++i) {
    auto row = cpu[i].reshape({-1});
    FeatureVector v;
    v.values.assign(row.data_ptr<float>(), row.data_ptr<float>() + row.numel());
    v.source_shape = {cpu.size(1), cpu.size(2), cpu.size(3)};
    out.push_back(std::move(v));
  }
  return out;
}

DetectorModule::DetectorModule(std::string architecture_id, std::int64_t input_channels,
                               std::int64_t class_count, std::string tap_point_id)
    : architecture_id_(std::move(architecture_id)),
      input_channels_(input_channels),
      class_count_(class_count),
      tap_point_id_(std::move(tap_point_id)) {
  if (input_channels != 3 && input_channels != 4) throw ValidationError("input_channels must be 3 or 4");
  if (class_count < 1) throw ValidationError("class_count must be at least 1");
}

std::string DetectorModule::parameter_group(const std::string& name) const {
  for (const char* group : {"backbone", "neck"}) {
    if (name.rfind(std::string(group) + ".", 0) == 0) return group;
  }
  return "head";
}

torch::Tensor DetectorModule::run_stages(torch::nn::Sequential& stages, const std::string& prefix,
                                         torch::Tensor x, std::vector<torch::Tensor>* outputs) {
  torch::Tensor tap;
  const auto names = stages->named_children();
  std::size_t i = 0;
  for (auto& stage : *stages) {
    x = stage.forward(x);
    if (outputs) outputs->push_back(x);
    if (prefix + "." + names[i].key() == tap_point_id_) tap = x;
    ++i;
  }
  if (!tap.defined()) throw Error("tap point " + tap_point_id_ + " not found among " + prefix + " stages");
  return tap;
}

Registry::Registry() { register_builtin_adapters(*this); }

Registry& Registry::instance() {
  static Registry registry;
  return registry;
}

void Registry::add(const std::string& id, ModuleFactory factory) { factories_[id] = std::move(factory); }

std::shared_ptr<DetectorModule> Registry::create(const std::string& id, std::int64_t input_channels,
                                                 std::int64_t class_count) const {
  auto it = factories_.find(id);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& [name, f] : factories_) known += (known.empty() ? "" : ", ") + name;
    throw ValidationError("unknown architecture '" + id + "'; registered: " + known);
  }
  auto module = it->second(input_channels, class_count);
  std::size_t hits = 0;
  for (const auto& item : module->named_modules()) hits += item.key() == module->tap_point_id();
  if (hits != 1) {
    throw Error("tap point " + module->tap_point_id() + " of " + id + " resolves to " + std::to_string(hits) +
                " layers");
  }
  return module;
}

std::vector<std::string> Registry::ids() const {
  std::vector<std::string> out;
  for (const auto& [name, f] : factories_) out.push_back(name);
  return out;
}

bool Registry::contains(const std::string& id) const { return factories_.count(id) > 0; }

std::vector<std::string> registered_architectures() { return Registry::instance().ids(); }

DetectorHandle::DetectorHandle(std::shared_ptr<DetectorModule> module) : module_(std::move(module)) {}

std::int64_t DetectorHandle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : module_->parameters()) n += p.numel();
  return n;
}

void DetectorHandle::set_trainable(const std::string& group, bool trainable) {
  bool any = false;
  for (auto& item : module_->named_parameters()) {
    if (module_->parameter_group(item.key()) == group) {
      item.value().set_requires_grad(trainable);
      any = true;
    }
  }
  if (!any) throw ValidationError("no parameter group named '" + group + "'");
}

std::map<std::string, bool> DetectorHandle::trainable_groups() const {
  std::map<std::string, bool> groups;
  for (const auto& item : module_->named_parameters()) {
    const auto g = module_->parameter_group(item.key());
    auto [it, inserted] = groups.emplace(g, item.value().requires_grad());
    if (!inserted) it->second = it->second && item.value().requires_grad();
  }
  return groups;
}

void DetectorHandle::freeze() {
  for (auto& p : module_->parameters()) p.set_requires_grad(false);
}

ForwardOutput DetectorHandle::forward_with_tap(const torch::Tensor& batch, const std::vector<ObjectSet>* targets,
                                               const DecodeOptions& decode) {
  if (batch.dim() != 4 || batch.size(1) != input_channels()) {
    throw ValidationError("batch has " + (batch.dim() == 4 ? std::to_string(batch.size(1)) : std::string("?")) +
                          " channels, detector " + architecture_id() + " expects " +
                          std::to_string(input_channels()));
  }
  if (targets && targets->size() != static_cast<std::size_t>(batch.size(0))) {
    throw ValidationError("targets do not match the batch size");
  }
  return module_->forward(batch, targets, decode);
}

DetectorHandle DetectorHandle::clone() const {
  auto copy = Registry::instance().create(architecture_id(), input_channels(), class_count());
  torch::NoGradGuard no_grad;
  auto src = module_->named_parameters();
  for (auto& item : copy->named_parameters()) {
    item.value().copy_(src[item.key()]);
    item.value().set_requires_grad(src[item.key()].requires_grad());
  }
  auto src_buffers = module_->named_buffers();
  for (auto& item : copy->named_buffers()) item.value().copy_(src_buffers[item.key()]);
  copy->train(module_->is_training());
  return DetectorHandle(copy);
}

std::string DetectorHandle::parameter_digest() const {
  // FNV-1a over names, shapes and raw bytes
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  auto feed_tensor = [&](const std::string& name, const torch::Tensor& t) {
    feed(name.data(), name.size());
    auto c = t.detach().to(torch::kCPU).contiguous();
    for (auto s : c.sizes()) feed(&s, sizeof s);
    feed(c.data_ptr(), c.numel() * c.element_size());
  };
  for (const auto& item : module_->named_parameters()) feed_tensor(item.key(), item.value());
  for (const auto& item : module_->named_buffers()) feed_tensor(item.key(), item.value());
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

DetectorHandle build_detector(const std::string& architecture_id, std::int64_t class_count, bool pretrained,
                              std::uint64_t seed) {
  if (!Registry::instance().contains(architecture_id)) {
    Registry::instance().create(architecture_id, 3, class_count);  // throws with the registered ids
  }
  torch::manual_seed(seed);
  DetectorHandle handle(Registry::instance().create(architecture_id, 3, class_count));
  if (pretrained) {
    const char* dir = std::getenv("LUPIDET_WEIGHTS_DIR");
    const std::filesystem::path path =
        std::filesystem::path(dir ? dir : "") / (architecture_id + ".pt");
    if (!dir || !std::filesystem::exists(path)) {
      throw ValidationError("pretrained weights for " + architecture_id + " not found (looked for " +
                            path.string() + "; set LUPIDET_WEIGHTS_DIR)");
    }
    load_checkpoint(path, handle);
  }
  return handle;
}

DetectorHandle extend_input_channels(const DetectorHandle& handle, std::uint64_t seed) {
  if (handle.input_channels() != 3) {
    throw ValidationError(handle.architecture_id() + " already has " + std::to_string(handle.input_channels()) +
                          " input channels");
  }
  auto wide = Registry::instance().create(handle.architecture_id(), 4, handle.class_count());
  const std::string input_name = wide->input_weight_name();
  torch::NoGradGuard no_grad;
  auto src = handle.module().named_parameters();
  for (auto& item : wide->named_parameters()) {
    const auto& old = src[item.key()];
    if (item.key() == input_name) {
      auto w = item.value();
      w.slice(1, 0, 3).copy_(old);
      // Kaiming normal, fan-in = 4 * kh * kw, gain sqrt(2)
      const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
      auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
      auto fresh = at::normal(0.0, std::sqrt(2.0 / fan_in), {w.size(0), 1, w.size(2), w.size(3)}, gen);
      w.slice(1, 3, 4).copy_(fresh);
    } else {
      item.value().copy_(old);
    }
    item.value().set_requires_grad(old.requires_grad());
  }
  auto src_buffers = handle.module().named_buffers();
  for (auto& item : wide->named_buffers()) item.value().copy_(src_buffers[item.key()]);
  wide->train(handle.is_training());
  return DetectorHandle(wide);
}

torch::Tensor stack_batch(const std::vector<const data::PreparedSample*>& samples, std::int64_t channels) {
  if (samples.empty()) throw ValidationError("empty batch");
  const std::int64_t size = samples.front()->size;
  auto batch = torch::empty({static_cast<std::int64_t>(samples.size()), channels, size, size});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto* s = samples[i];
    if (s->size != size) throw ValidationError("samples in a batch must share one size");
    if (s->channels < channels) {
      throw ValidationError(s->image_id + " has " + std::to_string(s->channels) + " channels, " +
                            std::to_string(channels) + " required");
    }
    std::memcpy(batch[static_cast<std::int64_t>(i)].data_ptr<float>(), s->values.data(),
                sizeof(float) * static_cast<std::size_t>(channels * size * size));
  }
  return batch;
}

}  // namespace lupidet::detection
