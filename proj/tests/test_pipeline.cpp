/* Copyright 2026 The Dynamics Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <gtest/gtest.h>

#include "dynamics/analysis.hpp"
#include "dynamics/pipeline.hpp"
#include "test_util.hpp"

namespace dynamics {
namespace {

namespace fs = std::filesystem;

std::string synth_file(const testutil::TempDir& dir, std::uint32_t clusters = 3,
                       std::uint64_t n = 600) {
  SyntheticSpec spec;
  spec.n_clusters = clusters;
  spec.total_samples = n;
  spec.dim = 16;
  spec.seed = 9;
  const auto d = gen_synthetic(spec);
  const std::string path = dir.file("in.emb");
  save_embeddings(d.store, path);
  return path;
}

PipelineConfig small_config(const std::string& input) {
  PipelineConfig c;
  c.input = input;
  c.k = 3;
  c.epochs = 2;
  return c;
}

TEST(PipelineTest, WritesAllArtifacts) {
  testutil::TempDir dir;
  StageLogger log(false);
  const auto res = run_pipeline(small_config(synth_file(dir)), log, dir.path() / "run");
  for (const char* name : {"config.json", "model-trained.clm", "model.clm", "assignment.bin",
                           "plan.json", "manifest-epoch-000.txt", "manifest-epoch-001.txt",
                           "report.json", "run.log"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "run" / name)) << name;
  }
  EXPECT_FALSE(fs::exists(dir.path() / "run" / "manifest-epoch-002.txt"));
  EXPECT_EQ(res.manifests.size(), 2u);
  EXPECT_EQ(res.trained_k, 3u);
  const auto plan = load_plan((dir.path() / "run" / "plan.json").string());
  EXPECT_EQ(plan.targets_int, res.plan.targets_int);
  const auto m = load_manifest(res.manifests[1].string());
  EXPECT_EQ(m.epoch, 1u);
  EXPECT_EQ(m.entries.size(), 300u);
  const auto asg = load_assignment((dir.path() / "run" / "assignment.bin").string());
  EXPECT_EQ(asg.total(), 600u);
}

TEST(PipelineTest, ZeroEpochsWritesNoManifest) {
  testutil::TempDir dir;
  StageLogger log(false);
  auto cfg = small_config(synth_file(dir));
  cfg.epochs = 0;
  const auto res = run_pipeline(cfg, log, dir.path() / "run");
  EXPECT_TRUE(res.manifests.empty());
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "report.json"));
  EXPECT_FALSE(fs::exists(dir.path() / "run" / manifest_name(0)));
}

TEST(PipelineTest, MissingInputFailsInIngest) {
  testutil::TempDir dir;
  StageLogger log(false);
  try {
    run_pipeline(small_config(dir.file("absent.emb")), log, dir.path() / "run");
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
    EXPECT_EQ(e.exit_code(), 2);
  }
  EXPECT_FALSE(fs::exists(dir.path() / "run" / "manifest-epoch-000.txt"));
}

TEST(PipelineTest, TooManyClustersIsConfigFailure) {
  testutil::TempDir dir;
  StageLogger log(false);
  auto cfg = small_config(synth_file(dir));
  cfg.k = 601;
  try {
    run_pipeline(cfg, log, dir.path() / "run");
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(ValidateTest, Diagnostics) {
  testutil::TempDir dir;
  const auto input = synth_file(dir);
  auto cfg = small_config(input);
  EXPECT_TRUE(validate(cfg).empty());

  cfg.alpha = -1;
  auto d = validate(cfg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].field, "alpha");

  cfg = small_config(input);
  cfg.merge_threshold = 1.5;
  d = validate(cfg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].field, "merge_threshold");

  cfg = small_config(input);
  cfg.k = 10000;
  cfg.mode = SamplingMode::kRandomStatic;
  d = validate(cfg);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].field, "k");
  EXPECT_EQ(d[1].field, "keep_fraction");

  cfg = small_config(dir.file("absent.emb"));
  EXPECT_EQ(validate(cfg).size(), 1u);
  EXPECT_FALSE(fs::exists(dir.file("absent.emb")));
}

TEST(ConfigTest, EchoReproducesManifests) {
  testutil::TempDir dir;
  StageLogger log(false);
  auto cfg = small_config(synth_file(dir));
  cfg.seed = 123;
  cfg.shuffle = true;
  const auto first = run_pipeline(cfg, log, dir.path() / "a");
  const auto echoed = load_config((dir.path() / "a" / "config.json").string());
  EXPECT_EQ(to_json(echoed), to_json(cfg));
  const auto second = run_pipeline(echoed, log, dir.path() / "b");
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(detail::read_file(first.manifests[e].string()),
              detail::read_file(second.manifests[e].string()));
  }
  EXPECT_EQ(detail::read_file((dir.path() / "a" / "report.json").string()),
            detail::read_file((dir.path() / "b" / "report.json").string()));
}

TEST(ConfigTest, ThreadCountDoesNotChangeOutputs) {
  testutil::TempDir dir;
  StageLogger log(false);
  auto cfg = small_config(synth_file(dir, 20, 5000));
  cfg.k = 25;
  const auto one = run_pipeline(cfg, log, dir.path() / "t1");
  cfg.threads = 4;
  const auto four = run_pipeline(cfg, log, dir.path() / "t4");
  for (const char* name : {"model.clm", "assignment.bin", "plan.json",
                           "manifest-epoch-000.txt", "manifest-epoch-001.txt"}) {
    EXPECT_EQ(detail::read_file((dir.path() / "t1" / name).string()),
              detail::read_file((dir.path() / "t4" / name).string()))
        << name;
  }
}

TEST(ConfigTest, JsonRejectsUnknownKeysAndBadTypes) {
  PipelineConfig c;
  EXPECT_THROW(apply_json(c, nlohmann::json{{"alpah", 0.3}}), ConfigError);
  apply_json(c, nlohmann::json{{"alpha", 0.3}, {"mode", "random-dynamic"},
                               {"keep_fraction", 0.25}});
  EXPECT_DOUBLE_EQ(c.alpha, 0.3);
  EXPECT_EQ(c.mode, SamplingMode::kRandomDynamic);
  EXPECT_EQ(c.keep_fraction, 0.25);
  EXPECT_EQ(c.k, 50000u);
}

TEST(ConfigTest, Defaults) {
  const PipelineConfig c;
  EXPECT_EQ(c.iterations, 10u);
  EXPECT_EQ(c.max_points_per_centroid, 1000u);
  EXPECT_DOUBLE_EQ(c.merge_threshold, 0.7);
  EXPECT_DOUBLE_EQ(c.alpha, 0.2);
  EXPECT_DOUBLE_EQ(c.target_fraction, 0.5);
  EXPECT_EQ(c.mode, SamplingMode::kClusterDynamic);
}

TEST(RunDirTest, NamesAreFreshAndOrdered) {
  testutil::TempDir dir;
  const auto a = fresh_run_dir(dir.path().string());
  fs::create_directories(a);
  const auto b = fresh_run_dir(dir.path().string());
  EXPECT_NE(a, b);
  EXPECT_EQ(a.filename().string().rfind("run-", 0), 0u);
  EXPECT_EQ(manifest_name(7), "manifest-epoch-007.txt");
}

}  // namespace
}  // namespace dynamics
