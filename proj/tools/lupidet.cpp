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
// lupidet: prepare data, train teachers, students and baselines, sweep the
// teacher weight, evaluate, visualize and profile detectors.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "lupidet/commands.hpp"
#include "lupidet/error.hpp"
#include "lupidet/logging.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privileged-information distillation for object detectors"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<double> alpha;
  std::optional<int> epochs;
  bool resume = false;
  bool quiet = false;
  int threads = 1;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Training seed override");
  app.add_option("--output-dir", output_dir, "Output directory override");
  app.add_option("--alpha", alpha, "Teacher weight override for student training");
  app.add_option("--epochs", epochs, "Epoch count override");
  app.add_flag("--resume", resume, "Continue an existing run directory");
  app.add_flag("--quiet", quiet, "Only print warnings and errors from the logger");
  app.add_option("--threads", threads, "Intra-op threads (1 keeps runs bit-reproducible)")->check(CLI::PositiveNumber);

  auto* prepare = app.add_subcommand("prepare", "Materialize dataset, privileged rasters and splits");
  auto* train = app.add_subcommand("train", "Train a teacher, student or baseline");
  std::string role = "baseline";
  std::string teacher;
  train->add_option("--role", role, "teacher | student | baseline")
      ->check(CLI::IsMember({"teacher", "student", "baseline"}));
  train->add_option("--teacher", teacher, "Teacher checkpoint (student role)");
  auto* sweep = app.add_subcommand("sweep", "Train one student per alpha and compare");
  sweep->add_option("--teacher", teacher, "Teacher checkpoint");

  std::vector<std::string> checkpoints;
  auto* evaluate = app.add_subcommand("evaluate", "COCO-style reports for checkpoints");
  bool oracle = false;
  evaluate->add_option("--checkpoint", checkpoints, "Checkpoint(s) to evaluate");
  evaluate->add_flag("--perfect-oracle", oracle, "Debug: also score ground truth as detections");
  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM overlays at the tap point");
  std::vector<std::string> ids;
  bool dump_csv = false;
  gradcam->add_option("--checkpoint", checkpoints, "Checkpoint(s)");
  gradcam->add_option("--ids", ids, "Image ids from the evaluation split");
  gradcam->add_flag("--csv", dump_csv, "Also dump raw heatmaps as CSV");
  auto* profile = app.add_subcommand("profile", "Size, parameters, GFLOPS and FPS");
  int repeats = 20;
  profile->add_option("--checkpoint", checkpoints, "Checkpoint(s)");
  profile->add_option("--repeats", repeats, "Timed batches")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  lupidet::log::set_quiet(quiet);
  torch::set_num_threads(threads);
  try {
    lupidet::cli::Overrides o;
    o.seed = seed;
    if (output_dir) o.output_dir = *output_dir;
    o.alpha = alpha;
    o.epochs = epochs;
    auto cfg = lupidet::cli::load_config(config_path, o);
    if (!teacher.empty()) cfg.train.teacher_checkpoint = teacher;
    std::vector<std::filesystem::path> paths(checkpoints.begin(), checkpoints.end());

    if (*prepare) lupidet::cli::cmd_prepare(cfg, std::cout);
    if (*train) lupidet::cli::cmd_train(cfg, lupidet::train::parse_role(role), resume, std::cout);
    if (*sweep) lupidet::cli::cmd_sweep(cfg, resume, std::cout);
    if (*evaluate) lupidet::cli::cmd_evaluate(cfg, paths, oracle, std::cout);
    if (*gradcam) lupidet::cli::cmd_gradcam(cfg, paths, ids, dump_csv, std::cout);
    if (*profile) lupidet::cli::cmd_profile(cfg, paths, repeats, std::cout);
  } catch (const lupidet::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
