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
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "lupidet/commands.hpp"
#include "lupidet/error.hpp"
#include "lupidet/interpretability.hpp"
#include "support/fixtures.hpp"
#include "support/tool.hpp"

namespace fs = std::filesystem;
using namespace lupidet;
using namespace lupidet::cli;
using lupidet::testing::read_text;
using lupidet::testing::run_tool;
using lupidet::testing::synthetic_config;
using lupidet::testing::TempDir;
using lupidet::testing::write_config;

namespace {

bool mentions(const std::vector<std::string>& problems, const std::string& prefix) {
  for (const auto& p : problems) {
    if (p.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST(Config, ReportsEveryProblemWithItsFieldPath) {
  const auto cfg = RunConfig::parse(R"({
    "schema_version": 1,
    "output_dir": "out",
    "dataset": {"format": "coco", "annotations": "missing.json", "target_size": "big"},
    "model": {"architecture_id": "nope", "colour": 3},
    "train": {"epochs": 0, "alphas": [0.5, 1.5]},
    "eval": {"split": "dev"}
  })", "/nonexistent_base");
  const auto problems = cfg.problems();
  EXPECT_TRUE(mentions(problems, "dataset.annotations: path does not exist"));
  EXPECT_TRUE(mentions(problems, "dataset.image_root: required"));
  EXPECT_TRUE(mentions(problems, "dataset.target_size: has the wrong type"));
  EXPECT_TRUE(mentions(problems, "model.architecture_id: unknown 'nope'"));
  EXPECT_TRUE(mentions(problems, "model.colour: unknown field"));
  EXPECT_TRUE(mentions(problems, "train.epochs:"));
  EXPECT_TRUE(mentions(problems, "train.alphas[1]:"));
  EXPECT_TRUE(mentions(problems, "eval.split:"));
  try {
    cfg.validate();
    FAIL() << "validate accepted a broken config";
  } catch (const ValidationError& e) {
    // one exception carries all of them
    for (const auto& p : problems) EXPECT_NE(std::string(e.what()).find(p), std::string::npos) << p;
  }
}

TEST(Config, SchemaVersionIsRequiredAndChecked) {
  EXPECT_TRUE(mentions(RunConfig::parse(R"({"output_dir": "o", "dataset": {"format": "synthetic"}})").problems(),
                       "schema_version: required"));
  EXPECT_TRUE(mentions(
      RunConfig::parse(R"({"schema_version": 9, "output_dir": "o", "dataset": {"format": "synthetic"}})").problems(),
      "schema_version: unsupported"));
  EXPECT_THROW(RunConfig::parse("{not json"), ValidationError);
}

TEST(Config, RelativePathsResolveAgainstTheConfigDirectory) {
  const auto cfg = RunConfig::parse(R"({"schema_version": 1, "output_dir": "out",
                                        "dataset": {"format": "synthetic"}})", "/base/dir");
  EXPECT_EQ(cfg.output_dir, fs::path("/base/dir/out"));
  EXPECT_TRUE(cfg.problems().empty());
}

TEST(Config, OverridesApplyBeforeValidation) {
  TempDir tmp("cfg");
  auto doc = synthetic_config(tmp / "out", 10, 1);
  doc["train"]["epochs"] = 0;  // fixed by the override
  const auto path = write_config(tmp / "c.json", doc);
  Overrides o;
  o.epochs = 3;
  o.seed = 99;
  o.alpha = 0.25;
  o.output_dir = tmp / "other";
  const auto cfg = load_config(path, o);
  EXPECT_EQ(cfg.train.config.epochs, 3);
  EXPECT_EQ(cfg.train.config.seed, 99u);
  EXPECT_EQ(cfg.dataset.seed, 1u);  // only the training seed moves
  EXPECT_EQ(*cfg.train.alpha, 0.25);
  EXPECT_EQ(cfg.output_dir, tmp / "other");
  o.alpha = 2.0;
  EXPECT_THROW(load_config(path, o), ValidationError);
}

TEST(RunId, EncodesRoleArchitectureAlphaAndSeed) {
  EXPECT_EQ(run_id(train::Role::kStudent, "tiny_anchor_free", 0.5, 3), "student_tiny_anchor_free_0.50_s3");
  EXPECT_EQ(run_id(train::Role::kBaseline, "mini_retinanet", std::nullopt, 1), "baseline_mini_retinanet_na_s1");
}

TEST(Tool, InvalidConfigExitsOneWithoutCreatingOutput) {
  TempDir tmp("tool");
  auto doc = synthetic_config(tmp / "out", 10, 1);
  doc["dataset"]["format"] = "coco";  // now annotations and image_root are missing
  doc["train"]["batch_size"] = 0;
  const auto path = write_config(tmp / "c.json", doc);
  const auto r = run_tool("--config " + path.string() + " prepare");
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("dataset.annotations: required"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("dataset.image_root: required"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("train.batch_size"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(tmp / "out"));
}

TEST(Tool, UsageErrorsExitOne) {
  EXPECT_EQ(run_tool("").exit_code, 1);
  EXPECT_EQ(run_tool("--config /nonexistent.json prepare").exit_code, 1);
  TempDir tmp("tool");
  const auto path = write_config(tmp / "c.json", synthetic_config(tmp / "out", 10, 1));
  EXPECT_EQ(run_tool("--config " + path.string() + " train --role coach").exit_code, 1);
  EXPECT_EQ(run_tool("--config " + path.string() + " evaluate").exit_code, 1);
}

TEST(Tool, UnreadableCheckpointIsARuntimeFailure) {
  TempDir tmp("tool");
  const auto path = write_config(tmp / "c.json", synthetic_config(tmp / "out", 10, 1));
  std::ofstream(tmp / "garbage.ckpt") << "not a checkpoint";
  const auto r = run_tool("--config " + path.string() + " profile --checkpoint " + (tmp / "garbage.ckpt").string());
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST(Prepare, AcceptanceSuiteIsMaterializedOnceAndThenLeftAlone) {
  TempDir tmp("prep");
  const auto path = write_config(tmp / "c.json", synthetic_config(tmp / "out", 0, 1));
  const auto cfg = load_config(path, {});
  std::ostringstream first;
  const auto s = cmd_prepare(cfg, first);
  EXPECT_EQ(s.images, 420u);
  EXPECT_EQ(s.masks, 420u);
  EXPECT_EQ(s.train, 300u);
  EXPECT_EQ(s.val, 60u);
  EXPECT_EQ(s.test, 60u);
  ASSERT_EQ(s.objects_per_class.size(), 3u);
  EXPECT_GT(s.files_changed, 840);
  for (const char* split : {"train", "val", "test"}) {
    EXPECT_TRUE(fs::exists(tmp / "out" / "data" / "splits" / (std::string(split) + ".txt")));
  }
  const auto annotations = read_text(tmp / "out" / "data" / "annotations.json");

  std::ostringstream second;
  EXPECT_EQ(cmd_prepare(cfg, second).files_changed, 0);
  EXPECT_NE(second.str().find("0 files changed"), std::string::npos) << second.str();
  EXPECT_EQ(read_text(tmp / "out" / "data" / "annotations.json"), annotations);

  const auto loaded = load_prepared(cfg);
  EXPECT_EQ(loaded.split.train.size(), 300u);
  for (const auto& t : loaded.split.test) {
    ASSERT_TRUE(t.privileged.has_value());
    EXPECT_NO_THROW(t.validate());
  }
}

TEST(Prepare, TilingMultipliesTheImages) {
  TempDir tmp("prep");
  auto doc = synthetic_config(tmp / "out", 10, 1);
  doc["dataset"]["tiling"] = {{"rows", 2}, {"cols", 2}};
  const auto cfg = load_config(write_config(tmp / "c.json", doc), {});
  std::ostringstream out;
  EXPECT_EQ(cmd_prepare(cfg, out).images, 40u);
}

TEST(Evaluate, PerfectOracleScoresOneOnEveryAveragePrecision) {
  TempDir tmp("eval");
  const auto cfg = load_config(write_config(tmp / "c.json", synthetic_config(tmp / "out", 30, 1)), {});
  std::ostringstream out;
  cmd_prepare(cfg, out);
  const auto reports = cmd_evaluate(cfg, {}, true, out);
  ASSERT_EQ(reports.size(), 1u);
  const auto& r = reports[0];
  for (double v : {r.map_50_95, r.map_50, r.map_75, r.mar_100, r.precision, r.recall, r.f1}) EXPECT_DOUBLE_EQ(v, 1.0);
  for (double v : {r.map_small, r.map_medium, r.map_large}) {
    EXPECT_TRUE(v == eval::kUndefined || v == 1.0) << v;
  }
  EXPECT_TRUE(fs::exists(tmp / "out" / "reports" / "oracle.json"));
  EXPECT_TRUE(fs::exists(tmp / "out" / "reports" / "oracle.csv"));
}

TEST(Train, PreconditionsFailBeforeAnyWork) {
  TempDir tmp("train");
  const auto path = write_config(tmp / "c.json", synthetic_config(tmp / "out", 10, 1));
  // student without a teacher
  auto r = run_tool("--config " + path.string() + " --alpha 0.5 train --role student");
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("train.teacher_checkpoint"), std::string::npos) << r.output;
  // nothing prepared yet
  r = run_tool("--config " + path.string() + " train --role baseline");
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("run prepare first"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(tmp / "out" / "runs"));
}

// One small prepared dataset shared by the end-to-end tests below; each test
// trains only what it needs.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipe");
    config_ = write_config(*dir_ / "c.json", synthetic_config(*dir_ / "out", 40, 1, 2));
    const auto r = run_tool("--config " + config_.string() + " prepare");
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const auto t = run_tool("--config " + config_.string() + " train --role teacher");
    ASSERT_EQ(t.exit_code, 0) << t.output;
    const auto b = run_tool("--config " + config_.string() + " train --role baseline");
    ASSERT_EQ(b.exit_code, 0) << b.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path out() { return dir_->path() / "out"; }
  static fs::path best(const std::string& run) {
    const auto summary = nlohmann::json::parse(read_text(out() / "runs" / run / "summary.json"));
    return out() / "runs" / run / summary.at("best_checkpoint").get<std::string>();
  }
  static std::string tool(const std::string& args) { return "--config " + config_.string() + " " + args; }

  static TempDir* dir_;
  static fs::path config_;
};

TempDir* Pipeline::dir_ = nullptr;
fs::path Pipeline::config_;

TEST_F(Pipeline, RunDirectoriesCarryTheirArtifacts) {
  for (const char* run : {"teacher_tiny_anchor_free_na_s2", "baseline_tiny_anchor_free_na_s2"}) {
    EXPECT_TRUE(fs::exists(out() / "runs" / run / "epochs.jsonl")) << run;
    EXPECT_TRUE(fs::exists(best(run))) << run;
  }
}

TEST_F(Pipeline, ExistingRunIsRejectedUnlessResumed) {
  auto r = run_tool(tool("train --role baseline"));
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("--resume"), std::string::npos);
  r = run_tool(tool("--resume train --role baseline"));
  EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST_F(Pipeline, StudentNeedsAFourChannelTeacherAndGetsItsOwnRun) {
  const auto baseline = best("baseline_tiny_anchor_free_na_s2").string();
  auto r = run_tool(tool("--alpha 0.5 train --role student --teacher " + baseline));
  EXPECT_EQ(r.exit_code, 1) << r.output;
  EXPECT_NE(r.output.find("four-channel"), std::string::npos) << r.output;

  const auto teacher = best("teacher_tiny_anchor_free_na_s2").string();
  r = run_tool(tool("--alpha 0.5 train --role student --teacher " + teacher));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out() / "runs" / "student_tiny_anchor_free_0.50_s2" / "summary.json"));
  const auto summary =
      nlohmann::json::parse(read_text(out() / "runs" / "student_tiny_anchor_free_0.50_s2" / "summary.json"));
  EXPECT_EQ(summary.at("alpha").get<double>(), 0.5);
  EXPECT_EQ(summary.at("role"), "student");
}

TEST_F(Pipeline, SeedOverrideNamesANewRun) {
  const auto r = run_tool(tool("--seed 7 train --role baseline"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out() / "runs" / "baseline_tiny_anchor_free_na_s7"));
}

TEST_F(Pipeline, EvaluateWritesComparableReports) {
  const auto teacher = best("teacher_tiny_anchor_free_na_s2");
  const auto baseline = best("baseline_tiny_anchor_free_na_s2");
  const auto cfg = load_config(config_, {});
  std::ostringstream out1;
  // a teacher needs the privileged channel, which evaluation supplies
  const auto reports = cmd_evaluate(cfg, {baseline, teacher}, false, out1);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_TRUE(fs::exists(out() / "reports" / (baseline.stem().string() + ".json")));
  EXPECT_TRUE(fs::exists(out() / "reports" / (teacher.stem().string() + ".csv")));
  EXPECT_NE(out1.str().find(baseline.stem().string()), std::string::npos);
  EXPECT_EQ(run_tool(tool("evaluate --checkpoint " + (out() / "missing.ckpt").string())).exit_code, 1);
}

TEST_F(Pipeline, GradcamWritesOneOverlayPerIdAndASideBySidePair) {
  const auto cfg = load_config(config_, {});
  const auto ids = load_prepared(cfg).part("test");
  ASSERT_GE(ids.size(), 2u);
  const auto baseline = best("baseline_tiny_anchor_free_na_s2");
  std::ostringstream log;
  auto written = cmd_gradcam(cfg, {baseline}, {ids[0].id(), ids[1].id()}, false, log);
  EXPECT_EQ(written.size(), 2u);
  for (const auto& p : written) EXPECT_TRUE(fs::exists(p)) << p;

  const auto teacher = best("teacher_tiny_anchor_free_na_s2");
  written = cmd_gradcam(cfg, {baseline, teacher}, {ids[0].id()}, true, log);
  EXPECT_EQ(written.size(), 3u);  // two overlays and one pair
  EXPECT_TRUE(fs::exists(out() / "gradcam" / cam::overlay_filename(ids[0].id(), "side_by_side")));

  std::ostringstream notice;
  EXPECT_TRUE(cmd_gradcam(cfg, {baseline}, {}, false, notice).empty());
  EXPECT_NE(notice.str().find("nothing to do"), std::string::npos);

  try {
    cmd_gradcam(cfg, {baseline}, {"no_such_image"}, false, log);
    FAIL() << "unknown id accepted";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("no_such_image"), std::string::npos);
    EXPECT_NE(msg.find(ids[0].id()), std::string::npos) << "valid ids are listed";
  }
}

TEST_F(Pipeline, ProfileRowsShareStaticColumnsAcrossRoles) {
  const auto cfg = load_config(config_, {});
  std::ostringstream log;
  const auto one = cmd_profile(cfg, {best("baseline_tiny_anchor_free_na_s2")}, 3, log);
  EXPECT_EQ(one.size(), 1u);

  const auto teacher = best("teacher_tiny_anchor_free_na_s2").string();
  if (!fs::exists(out() / "runs" / "student_tiny_anchor_free_0.25_s2")) {
    ASSERT_EQ(run_tool(tool("--alpha 0.25 train --role student --teacher " + teacher)).exit_code, 0);
  }
  const auto rows = cmd_profile(
      cfg, {best("baseline_tiny_anchor_free_na_s2"), best("student_tiny_anchor_free_0.25_s2")}, 3, log);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].size_mb, rows[1].size_mb);
  EXPECT_EQ(rows[0].parameters_m, rows[1].parameters_m);
  EXPECT_EQ(rows[0].approx_gflops, rows[1].approx_gflops);
  const auto csv = read_text(out() / "profile.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Pipeline, SweepWritesSortedTableAndBestMarker) {
  const auto teacher = best("teacher_tiny_anchor_free_na_s2").string();
  const auto r = run_tool(tool("sweep --teacher " + teacher));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto dir = out() / "sweeps" / "tiny_anchor_free_s2";
  const auto csv = read_text(dir / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);  // header and two alphas
  ASSERT_NE(csv.find("\n0.50,"), std::string::npos) << csv;
  EXPECT_LT(csv.find("\n0.00,"), csv.find("\n0.50,")) << csv;
  EXPECT_TRUE(fs::exists(dir / "best_alpha.txt"));
  EXPECT_EQ(run_tool(tool("sweep --teacher " + teacher)).exit_code, 1);
}
