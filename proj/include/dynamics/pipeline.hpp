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
#ifndef DYNAMICS_PIPELINE_HPP_
#define DYNAMICS_PIPELINE_HPP_

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dynamics/analysis.hpp"
#include "dynamics/clustering.hpp"
#include "dynamics/common.hpp"
#include "dynamics/sampler.hpp"
#include "dynamics/scaling.hpp"
#include "dynamics/store.hpp"
#include "json.hpp"

namespace dynamics {

// Defaults: 10 iterations, 1000 points per centroid, merge at cosine 0.7,
// alpha 0.2 and a per-epoch budget of half the ingested samples.
struct PipelineConfig {
  std::string input;
  std::string output_dir = "runs";
  std::uint32_t k = 50000;
  std::uint32_t iterations = 10;
  std::uint64_t max_points_per_centroid = 1000;
  double merge_threshold = 0.7;
  double alpha = 0.2;
  double target_fraction = 0.5;
  std::uint64_t seed = 0;
  std::uint64_t epochs = 1;
  SamplingMode mode = SamplingMode::kClusterDynamic;
  std::optional<double> keep_fraction;
  bool shuffle = false;
  unsigned threads = 1;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j{{"input", c.input},
                   {"output_dir", c.output_dir},
                   {"k", c.k},
                   {"iterations", c.iterations},
                   {"max_points_per_centroid", c.max_points_per_centroid},
                   {"merge_threshold", c.merge_threshold},
                   {"alpha", c.alpha},
                   {"target_fraction", c.target_fraction},
                   {"seed", c.seed},
                   {"epochs", c.epochs},
                   {"mode", std::string(to_string(c.mode))},
                   {"keep_fraction", nullptr},
                   {"shuffle", c.shuffle}};
  if (c.keep_fraction) j["keep_fraction"] = *c.keep_fraction;
  return j;
}

// Overlays the keys present in `j` onto `c`. Unknown keys are rejected so a
// typo cannot silently fall back to a default.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "input") v.get_to(c.input);
      else if (key == "output_dir") v.get_to(c.output_dir);
      else if (key == "k") v.get_to(c.k);
      else if (key == "iterations") v.get_to(c.iterations);
      else if (key == "max_points_per_centroid") v.get_to(c.max_points_per_centroid);
      else if (key == "merge_threshold") v.get_to(c.merge_threshold);
      else if (key == "alpha") v.get_to(c.alpha);
      else if (key == "target_fraction") v.get_to(c.target_fraction);
      else if (key == "seed") v.get_to(c.seed);
      else if (key == "epochs") v.get_to(c.epochs);
      else if (key == "mode") c.mode = parse_mode(v.get<std::string>());
      else if (key == "keep_fraction") {
        if (v.is_null()) c.keep_fraction.reset();
        else c.keep_fraction = v.get<double>();
      } else if (key == "shuffle") v.get_to(c.shuffle);
      else if (key == "threads") v.get_to(c.threads);
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::string& path) {
  PipelineConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  apply_json(c, j);
  return c;
}

struct Diagnostic {
  std::string field;
  std::string message;
};

// Lists every constraint violation; never throws and never writes.
inline std::vector<Diagnostic> validate(const PipelineConfig& c) {
  std::vector<Diagnostic> out;
  if (c.input.empty()) {
    out.push_back({"input", "no input embedding file given"});
  } else {
    try {
      const EmbeddingHeader h = read_embedding_header(c.input);
      if (c.k > h.count) {
        out.push_back({"k", "k = " + std::to_string(c.k) + " exceeds the " +
                                std::to_string(h.count) + " samples in the input"});
      }
    } catch (const Error& e) {
      out.push_back({"input", e.what()});
    }
  }
  if (c.k == 0) out.push_back({"k", "k must be positive"});
  if (c.iterations == 0) out.push_back({"iterations", "iterations must be positive"});
  if (c.max_points_per_centroid == 0) {
    out.push_back({"max_points_per_centroid", "must be positive"});
  }
  if (!std::isfinite(c.alpha) || c.alpha < 0.0) {
    out.push_back({"alpha", "scaling exponent must satisfy alpha >= 0"});
  }
  if (!(c.merge_threshold > 0.0) || c.merge_threshold > 1.0) {
    out.push_back({"merge_threshold", "merge threshold must lie in (0, 1]"});
  }
  if (!(c.target_fraction > 0.0) || c.target_fraction > 1.0) {
    out.push_back({"target_fraction", "target fraction must lie in (0, 1]"});
  }
  if (is_random_mode(c.mode)) {
    if (!c.keep_fraction) {
      out.push_back({"keep_fraction", "required for " + std::string(to_string(c.mode))});
    } else if (!(*c.keep_fraction > 0.0) || *c.keep_fraction > 1.0) {
      out.push_back({"keep_fraction", "keep fraction must lie in (0, 1]"});
    }
  } else if (c.keep_fraction) {
    out.push_back({"keep_fraction", "only applies to random modes"});
  }
  return out;
}

// Failure inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : Error(stage + ": " + what), stage_(std::move(stage)), exit_code_(exit_code) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

// One JSON object per line, to stderr (optional) and the run log.
class StageLogger {
 public:
  explicit StageLogger(bool to_stderr = true) : to_stderr_(to_stderr) {}

  void open(const std::string& path) { file_.open(path, std::ios::app); }

  void log(const nlohmann::json& record) {
    const std::string line = record.dump();
    if (to_stderr_) std::cerr << line << '\n';
    if (file_) file_ << line << '\n' << std::flush;
  }

 private:
  bool to_stderr_;
  std::ofstream file_;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> manifests;
  std::uint32_t trained_k = 0;
  std::uint32_t live_k = 0;
  ScalingPlan plan;
};

inline std::filesystem::path fresh_run_dir(const std::string& base) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "run-%Y%m%dT%H%M%SZ", &tm);
  std::filesystem::path dir = std::filesystem::path(base) / stamp;
  for (int suffix = 1; std::filesystem::exists(dir); ++suffix) {
    dir = std::filesystem::path(base) / (std::string(stamp) + "-" + std::to_string(suffix));
  }
  return dir;
}

inline std::string manifest_name(std::uint64_t epoch) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "manifest-epoch-%03llu.txt",
                static_cast<unsigned long long>(epoch));
  return buf;
}

// ingest -> normalize -> train -> merge -> recount -> scale -> sample per
// epoch -> reports. When `run_dir` is empty a timestamped directory is
// created under config.output_dir. Artifacts from completed stages are kept
// when a later stage fails.
inline RunResult run_pipeline(const PipelineConfig& config, StageLogger& logger,
                              std::filesystem::path run_dir = {}) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  RunResult result;

  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = clock::now();
    try {
      nlohmann::json extra = fn();
      const double ms =
          std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      nlohmann::json rec{{"stage", name}, {"status", "ok"}, {"duration_ms", ms}};
      if (extra.is_object()) rec.update(extra);
      logger.log(rec);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      logger.log({{"stage", name}, {"status", "error"}, {"error", e.what()}});
      const bool input_problem =
          dynamic_cast<const IoError*>(&e) || dynamic_cast<const ConfigError*>(&e);
      throw StageError(name, e.what(), input_problem ? 2 : 1);
    }
  };

  stage("validate", [&] {
    if (config.input.empty() || !fs::exists(config.input)) {
      throw StageError("ingest", "input file '" + config.input + "' does not exist", 2);
    }
    const auto diags = validate(config);
    if (!diags.empty()) {
      std::string msg;
      for (const auto& d : diags) msg += (msg.empty() ? "" : "; ") + d.field + ": " + d.message;
      throw ConfigError(msg);
    }
    return nlohmann::json::object();
  });

  if (run_dir.empty()) run_dir = fresh_run_dir(config.output_dir);
  fs::create_directories(run_dir);
  result.run_dir = run_dir;
  logger.open((run_dir / "run.log").string());

  {
    // The echo omits the thread count: outputs do not depend on it.
    detail::write_file((run_dir / "config.json").string(),
                       to_json(config).dump(2) + "\n");
  }

  EmbeddingStore store;
  stage("ingest", [&] {
    store = load_embeddings(config.input);
    return nlohmann::json{{"count", store.size()}, {"dim", store.dim()}};
  });
  stage("normalize", [&] {
    store = normalize(store);
    return nlohmann::json::object();
  });

  KMeansResult trained;
  stage("train_kmeans", [&] {
    KMeansOptions opt;
    opt.k = config.k;
    opt.iterations = config.iterations;
    opt.max_points_per_centroid = config.max_points_per_centroid;
    opt.seed = config.seed;
    opt.threads = config.threads;
    trained = train_kmeans(store, opt);
    result.trained_k = trained.model.k;
    save_model(trained.model, (run_dir / "model-trained.clm").string());
    return nlohmann::json{{"k", trained.model.k},
                          {"training_points", trained.training_points},
                          {"objective", trained.objective.back()}};
  });

  ClusterAssignment raw;
  stage("assign", [&] {
    raw = assign(store, trained.model, config.threads);
    return nlohmann::json{{"samples", raw.size()}};
  });

  ClusterModel merged;
  stage("merge_centroids", [&] {
    merged = merge_centroids(trained.model, config.merge_threshold);
    result.live_k = merged.k;
    save_model(merged, (run_dir / "model.clm").string());
    return nlohmann::json{{"live_k", merged.k}};
  });

  ClusterAssignment asg;
  stage("recount", [&] {
    asg = recount_after_merge(raw, merged);
    save_assignment(asg, (run_dir / "assignment.bin").string());
    return nlohmann::json{{"clusters", asg.counts.size()}};
  });

  stage("compute_targets", [&] {
    result.plan = compute_targets(
        asg.counts, config.alpha,
        config.target_fraction * static_cast<double>(store.size()));
    save_plan(result.plan, (run_dir / "plan.json").string());
    return nlohmann::json{{"target_total", std::llround(result.plan.target_total)}};
  });

  SamplerConfig scfg;
  scfg.mode = config.mode;
  scfg.seed = config.seed;
  scfg.epochs = std::max<std::uint64_t>(config.epochs, 1);
  scfg.keep_fraction = config.keep_fraction;
  for (std::uint64_t e = 0; e < config.epochs; ++e) {
    stage("sample_epoch", [&] {
      EpochManifest m = sample_epoch(asg, result.plan, scfg, e, config.threads);
      if (config.shuffle) shuffle_manifest(m);
      const fs::path path = run_dir / manifest_name(e);
      save_manifest(m, path.string());
      result.manifests.push_back(path);
      return nlohmann::json{{"epoch", e}, {"entries", m.entries.size()}};
    });
  }

  stage("report", [&] {
    nlohmann::json rep{{"schema", kReportSchema},
                       {"kind", "pipeline"},
                       {"samples", store.size()},
                       {"trained_k", result.trained_k},
                       {"live_k", result.live_k},
                       {"objective", trained.objective},
                       {"counts", to_json(distribution_report(asg.counts))},
                       {"targets", to_json(describe_plan(result.plan))},
                       {"epochs", config.epochs}};
    detail::write_file((run_dir / "report.json").string(), rep.dump(2) + "\n");
    return nlohmann::json::object();
  });
  return result;
}

}  // namespace dynamics

#endif  // DYNAMICS_PIPELINE_HPP_
