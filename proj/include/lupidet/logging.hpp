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

// Thin facade over spdlog. Kept free of spdlog/fmt includes so that
// translation units compiled against libtorch (which bundles its own fmt)
// can log without header conflicts.

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace lupidet::log {

void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

// Silences console output below warnings (used by tests and the CLI --quiet).
void set_quiet(bool quiet);

// Records every warning emitted while alive. Not thread-safe with respect
// to other captures; intended for tests.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages() const;
  bool contains(std::string_view needle) const;
  std::size_t count() const { return messages().size(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lupidet::log
