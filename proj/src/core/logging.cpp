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
#include "lupidet/logging.hpp"

#include <algorithm>
#include <mutex>

#include <spdlog/sinks/ringbuffer_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace lupidet::log {
namespace {

std::shared_ptr<spdlog::logger>& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    auto l = std::make_shared<spdlog::logger>("lupidet", console);
    l->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    l->set_level(spdlog::level::info);
    return l;
  }();
  return instance;
}

std::mutex capture_mutex;

}  // namespace

void info(std::string_view message) { logger()->info(message); }
void warn(std::string_view message) { logger()->warn(message); }
void error(std::string_view message) { logger()->error(message); }

void set_quiet(bool quiet) {
  auto& sinks = logger()->sinks();
  if (!sinks.empty()) sinks.front()->set_level(quiet ? spdlog::level::warn : spdlog::level::trace);
}

struct WarningCapture::Impl {
  std::shared_ptr<spdlog::sinks::ringbuffer_sink_mt> sink;
};

WarningCapture::WarningCapture() : impl_(std::make_unique<Impl>()) {
  impl_->sink = std::make_shared<spdlog::sinks::ringbuffer_sink_mt>(4096);
  impl_->sink->set_level(spdlog::level::warn);
  impl_->sink->set_pattern("%v");
  std::lock_guard lock(capture_mutex);
  logger()->sinks().push_back(impl_->sink);
}

WarningCapture::~WarningCapture() {
  std::lock_guard lock(capture_mutex);
  auto& sinks = logger()->sinks();
  sinks.erase(std::remove(sinks.begin(), sinks.end(), impl_->sink), sinks.end());
}

std::vector<std::string> WarningCapture::messages() const {
  return impl_->sink->last_formatted();
}

bool WarningCapture::contains(std::string_view needle) const {
  for (const auto& m : messages()) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace lupidet::log
