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

// Static and timed cost of a detector: checkpoint size, parameter count,
// estimated compute and throughput.

#include <optional>
#include <string>

#include <torch/torch.h>

#include "lupidet/detector.hpp"

namespace lupidet::profiling {

struct RuntimeProfile {
  std::string label;
  double size_mb = 0;       // serialized inference checkpoint, bytes / 2^20
  double parameters_m = 0;  // millions
  std::optional<double> approx_gflops;  // 2 * MACs / 1e9 at gflops_size^2
  double fps = 0;           // median per-batch images / second
  int warmup_batches = 0;
  int timed_batches = 0;
  int batch_size = 0;
};

inline constexpr int kMinWarmup = 3;
inline constexpr int kGflopsInputSize = 800;

/// 2 * MACs / 1e9 from the adapter's layer walk, or nullopt.
std::optional<double> approx_gflops(const detection::DetectorHandle& handle, int height, int width);

/// Times `repeats` eval-mode forwards of `batch` after max(warmup, 3)
/// untimed ones. Static fields do not depend on the batch or repeats.
RuntimeProfile profile(detection::DetectorHandle& handle, const torch::Tensor& batch, int repeats,
                       int warmup = kMinWarmup, int gflops_size = kGflopsInputSize);

/// "model,size_mb,parameters_m,gflops,fps"
std::string csv_header();
/// Unavailable GFLOPS are written as "n/a".
std::string csv_row(const RuntimeProfile& p);

}  // namespace lupidet::profiling
