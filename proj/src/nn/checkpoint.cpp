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
#include <sstream>

#include "lupidet/detector.hpp"
#include "lupidet/error.hpp"

namespace lupidet::detection {
namespace {

void write_info(torch::serialize::OutputArchive& archive, const CheckpointInfo& info) {
  archive.write("meta.format_version", c10::IValue(info.format_version));
  archive.write("meta.architecture_id", c10::IValue(info.architecture_id));
  archive.write("meta.input_channels", c10::IValue(info.input_channels));
  archive.write("meta.class_count", c10::IValue(info.class_count));
  archive.write("meta.tap_point_id", c10::IValue(info.tap_point_id));
  archive.write("meta.epoch", c10::IValue(info.epoch));
  archive.write("meta.best_metric", c10::IValue(info.best_metric));
  archive.write("meta.epochs_since_best", c10::IValue(info.epochs_since_best));
  archive.write("meta.role", c10::IValue(info.role));
  archive.write("meta.alpha", c10::IValue(info.alpha));
  // seeds round-trip through the signed 64-bit slot bitwise
  archive.write("meta.seed", c10::IValue(static_cast<std::int64_t>(info.seed)));
}

CheckpointInfo read_info(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  CheckpointInfo info;
  c10::IValue v;
  auto need = [&](const char* key) -> c10::IValue& {
    if (!archive.try_read(key, v)) throw ParseError(path.string() + ": missing " + key);
    return v;
  };
  info.format_version = need("meta.format_version").toInt();
  if (info.format_version != kCheckpointFormatVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint format " + std::to_string(info.format_version));
  }
  info.architecture_id = need("meta.architecture_id").toStringRef();
  info.input_channels = need("meta.input_channels").toInt();
  info.class_count = need("meta.class_count").toInt();
  info.tap_point_id = need("meta.tap_point_id").toStringRef();
  info.epoch = need("meta.epoch").toInt();
  info.best_metric = need("meta.best_metric").toDouble();
  info.epochs_since_best = need("meta.epochs_since_best").toInt();
  info.role = need("meta.role").toStringRef();
  info.alpha = need("meta.alpha").toDouble();
  info.seed = static_cast<std::uint64_t>(need("meta.seed").toInt());
  return info;
}

torch::serialize::OutputArchive make_archive(const DetectorHandle& handle, CheckpointInfo info,
                                             torch::optim::Optimizer* optimizer) {
  info.architecture_id = handle.architecture_id();
  info.input_channels = handle.input_channels();
  info.class_count = handle.class_count();
  info.tap_point_id = handle.tap_point_id();
  info.format_version = kCheckpointFormatVersion;
  torch::serialize::OutputArchive archive;
  write_info(archive, info);
  torch::serialize::OutputArchive model;
  handle.module().save(model);
  archive.write("model", model);
  if (optimizer) {
    torch::serialize::OutputArchive opt;
    optimizer->save(opt);
    archive.write("optimizer", opt);
  }
  return archive;
}

void open(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw ParseError(path.string() + ": not a readable checkpoint");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DetectorHandle& handle, CheckpointInfo info,
                     torch::optim::Optimizer* optimizer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto archive = make_archive(handle, std::move(info), optimizer);
  // write-then-rename so a crash never leaves a torn checkpoint
  auto tmp = path;
  tmp += ".tmp";
  archive.save_to(tmp.string());
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  open(archive, path);
  return read_info(archive, path);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, DetectorHandle& handle,
                               torch::optim::Optimizer* optimizer) {
  torch::serialize::InputArchive archive;
  open(archive, path);
  auto info = read_info(archive, path);
  auto mismatch = [&](const std::string& what, const std::string& have, const std::string& want) {
    throw ValidationError(path.string() + ": checkpoint " + what + " is " + have + ", detector has " + want);
  };
  if (info.architecture_id != handle.architecture_id()) {
    mismatch("architecture", info.architecture_id, handle.architecture_id());
  }
  if (info.input_channels != handle.input_channels()) {
    mismatch("input channel count", std::to_string(info.input_channels), std::to_string(handle.input_channels()));
  }
  if (info.class_count != handle.class_count()) {
    mismatch("class count", std::to_string(info.class_count), std::to_string(handle.class_count()));
  }
  torch::serialize::InputArchive model;
  archive.read("model", model);
  {
    torch::NoGradGuard no_grad;
    handle.module().load(model);
  }
  if (optimizer) {
    torch::serialize::InputArchive opt;
    if (!archive.try_read("optimizer", opt)) throw ParseError(path.string() + ": no optimizer state");
    optimizer->load(opt);
  }
  return info;
}

DetectorHandle load_detector(const std::filesystem::path& path, CheckpointInfo* info) {
  auto meta = read_checkpoint_info(path);
  DetectorHandle handle(Registry::instance().create(meta.architecture_id, meta.input_channels, meta.class_count));
  auto loaded = load_checkpoint(path, handle);
  if (info) *info = loaded;
  return handle;
}

std::size_t serialized_size(const DetectorHandle& handle) {
  auto archive = make_archive(handle, {}, nullptr);
  std::ostringstream os;
  archive.save_to(os);
  return os.str().size();
}

}  // namespace lupidet::detection
