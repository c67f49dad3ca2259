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
#include "lupidet/profiling.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

#include "lupidet/error.hpp"

namespace lupidet::profiling {

std::optional<double> approx_gflops(const detection::DetectorHandle& handle, int height, int width) {
  auto costs = handle.module().layer_costs(height, width);
  if (!costs) return std::nullopt;
  double macs = 0;
  for (const auto& c : *costs) macs += c.macs;
  return 2.0 * macs / 1e9;
}

RuntimeProfile profile(detection::DetectorHandle& handle, const torch::Tensor& batch, int repeats, int warmup,
                       int gflops_size) {
  if (repeats < 1) throw ValidationError("repeats must be at least 1");
  if (batch.dim() != 4 || batch.size(0) < 1) throw ValidationError("profile needs a non-empty [N, C, H, W] batch");
  RuntimeProfile p;
  p.size_mb = static_cast<double>(detection::serialized_size(handle)) / (1024.0 * 1024.0);
  p.parameters_m = static_cast<double>(handle.parameter_count()) / 1e6;
  p.approx_gflops = approx_gflops(handle, gflops_size, gflops_size);
  p.warmup_batches = std::max(warmup, kMinWarmup);
  p.timed_batches = repeats;
  p.batch_size = static_cast<int>(batch.size(0));

  handle.eval();
  torch::NoGradGuard no_grad;
  for (int i = 0; i < p.warmup_batches; ++i) handle.forward_with_tap(batch);
  std::vector<double> rates;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    handle.forward_with_tap(batch);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rates.push_back(static_cast<double>(p.batch_size) / std::max(s, 1e-9));
  }
  std::sort(rates.begin(), rates.end());
  const auto n = rates.size();
  p.fps = n % 2 ? rates[n / 2] : 0.5 * (rates[n / 2 - 1] + rates[n / 2]);
  return p;
}

std::string csv_header() { return "model,size_mb,parameters_m,gflops,fps"; }

std::string csv_row(const RuntimeProfile& p) {
  char buf[256];
  char gflops[32] = "n/a";
  if (p.approx_gflops) std::snprintf(gflops, sizeof gflops, "%.4f", *p.approx_gflops);
  std::snprintf(buf, sizeof buf, "%s,%.4f,%.6f,%s,%.2f", p.label.c_str(), p.size_mb, p.parameters_m, gflops, p.fps);
  return buf;
}

}  // namespace lupidet::profiling
