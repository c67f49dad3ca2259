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

// Pipeline commands behind the lupidet tool. Each command validates its
// preconditions before touching the filesystem. Layout under output_dir:
//   data/images/<id>.png, data/annotations.json, data/privileged/<id>.mask.png,
//   data/splits/{train,val,test}.txt
//   runs/<run_id>/       checkpoints, steps.jsonl, epochs.jsonl, summary.json
//   sweeps/<arch>_s<seed>/  per-alpha runs, sweep.csv, best_alpha.txt
//   reports/<label>.{json,csv}, gradcam/*.gradcam.png, profile.csv

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lupidet/config.hpp"
#include "lupidet/evaluation.hpp"
#include "lupidet/profiling.hpp"
#include "lupidet/training.hpp"

namespace lupidet::cli {

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;  // training seed
  std::optional<std::filesystem::path> output_dir;
  std::optional<double> alpha;
  std::optional<int> epochs;
};

/// Loads the config, applies overrides, validates.
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides);

struct PrepareSummary {
  std::size_t images = 0;
  std::size_t masks = 0;
  std::size_t train = 0, val = 0, test = 0;
  std::vector<std::size_t> objects_per_class;
  int files_changed = 0;
};

/// Materializes the dataset, privileged rasters and split manifest.
/// Re-running with unchanged inputs writes nothing.
PrepareSummary cmd_prepare(const RunConfig& cfg, std::ostream& out);

/// Dataset as written by cmd_prepare, privileged rasters attached.
struct PreparedDataset {
  LabelMap labels;
  data::Split split;

  const std::vector<DatasetTriplet>& part(const std::string& name) const;
};
PreparedDataset load_prepared(const RunConfig& cfg);

std::vector<data::PreparedSample> preprocess_all(const std::vector<DatasetTriplet>& triplets, int target_size);

/// "<role>_<arch>_<alpha or na>_s<seed>"
std::string run_id(train::Role role, const std::string& architecture_id, std::optional<double> alpha,
                   std::uint64_t seed);

/// Returns the run directory.
std::filesystem::path cmd_train(const RunConfig& cfg, train::Role role, bool resume, std::ostream& out);

train::SweepResult cmd_sweep(const RunConfig& cfg, bool resume, std::ostream& out);

/// One report per checkpoint (or a single oracle report whose detections are
/// the ground truth itself when perfect_oracle is set).
std::vector<eval::EvalReport> cmd_evaluate(const RunConfig& cfg, const std::vector<std::filesystem::path>& checkpoints,
                                           bool perfect_oracle, std::ostream& out);

/// Overlay PNGs, one per id per checkpoint, plus a side-by-side image per id
/// when several checkpoints are given.
std::vector<std::filesystem::path> cmd_gradcam(const RunConfig& cfg,
                                               const std::vector<std::filesystem::path>& checkpoints,
                                               const std::vector<std::string>& image_ids, bool dump_csv,
                                               std::ostream& out);

std::vector<profiling::RuntimeProfile> cmd_profile(const RunConfig& cfg,
                                                   const std::vector<std::filesystem::path>& checkpoints,
                                                   int repeats, std::ostream& out);

}  // namespace lupidet::cli
