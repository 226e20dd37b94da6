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
// Command-line front end for the dynamics library.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynamics.hpp"

namespace {

using namespace dynamics;
using nlohmann::json;

int g_threads = 0;

unsigned threads() { return resolve_threads(g_threads); }

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    detail::write_file(path, j.dump(2) + "\n");
  }
}

json read_json(const std::string& path) {
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// A count vector is either a bare JSON array or an object with "counts".
std::vector<std::uint64_t> read_counts(const std::string& path) {
  const json j = read_json(path);
  try {
    if (j.is_array()) return j.get<std::vector<std::uint64_t>>();
    return j.at("counts").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' holds no count vector: " + e.what());
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ConfigError("'" + item + "' is not a number");
    }
  }
  return out;
}

// CSV rows "id,v1,...,vd"; rows may come in any id order.
EmbeddingStore read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::pair<std::uint64_t, std::vector<float>>> rows;
  std::string line;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::pair<std::uint64_t, std::vector<float>> row;
    try {
      row.first = std::stoull(cell);
      while (std::getline(ss, cell, ',')) row.second.push_back(std::stof(cell));
    } catch (const std::logic_error&) {
      throw FormatError("non-numeric CSV cell in '" + path + "'");
    }
    if (dim == 0) dim = row.second.size();
    if (row.second.size() != dim || dim == 0) {
      throw FormatError("CSV rows in '" + path + "' have inconsistent widths");
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SampleId> ids;
  std::vector<float> data;
  for (auto& [id, v] : rows) {
    ids.push_back(SampleId{id});
    data.insert(data.end(), v.begin(), v.end());
  }
  return EmbeddingStore(static_cast<std::uint32_t>(std::max<std::size_t>(dim, 1)),
                        std::move(ids), std::move(data));
}

json report_json(const DistributionReport& r, const std::string& source) {
  json j = to_json(r);
  j["schema"] = kReportSchema;
  j["kind"] = "distribution";
  j["source"] = source;
  return j;
}

// Options shared by `run` and `validate`; only flags the user actually passed
// override the config file.
struct PipelineFlags {
  std::string config_path;
  PipelineConfig values;
  std::string mode;
  double keep_fraction = 0.0;
  std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> setters;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON pipeline config file");
    bind(app->add_option("--input", values.input, "Input EMB1 embedding file"),
         [this](PipelineConfig& c) { c.input = values.input; });
    bind(app->add_option("--output-dir", values.output_dir, "Parent of run directories"),
         [this](PipelineConfig& c) { c.output_dir = values.output_dir; });
    bind(app->add_option("--k", values.k, "Number of k-means clusters"),
         [this](PipelineConfig& c) { c.k = values.k; });
    bind(app->add_option("--iters", values.iterations, "k-means iterations"),
         [this](PipelineConfig& c) { c.iterations = values.iterations; });
    bind(app->add_option("--max-points-per-centroid", values.max_points_per_centroid,
                         "Training subset cap per centroid"),
         [this](PipelineConfig& c) { c.max_points_per_centroid = values.max_points_per_centroid; });
    bind(app->add_option("--threshold", values.merge_threshold, "Centroid merge threshold"),
         [this](PipelineConfig& c) { c.merge_threshold = values.merge_threshold; });
    bind(app->add_option("--alpha", values.alpha, "Scaling exponent"),
         [this](PipelineConfig& c) { c.alpha = values.alpha; });
    bind(app->add_option("--target-fraction", values.target_fraction,
                         "Per-epoch budget as a fraction of the samples"),
         [this](PipelineConfig& c) { c.target_fraction = values.target_fraction; });
    bind(app->add_option("--seed", values.seed, "Run seed"),
         [this](PipelineConfig& c) { c.seed = values.seed; });
    bind(app->add_option("--epochs", values.epochs, "Number of epoch manifests"),
         [this](PipelineConfig& c) { c.epochs = values.epochs; });
    bind(app->add_option("--mode", mode, "Sampling mode"),
         [this](PipelineConfig& c) { c.mode = parse_mode(mode); });
    bind(app->add_option("--keep-fraction", keep_fraction, "Keep fraction for random modes"),
         [this](PipelineConfig& c) { c.keep_fraction = keep_fraction; });
    bind(app->add_flag("--shuffle", values.shuffle, "Shuffle manifests"),
         [this](PipelineConfig& c) { c.shuffle = values.shuffle; });
  }

  void bind(CLI::Option* opt, std::function<void(PipelineConfig&)> fn) {
    setters.emplace_back(opt, std::move(fn));
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    for (const auto& [opt, fn] : setters)
      if (opt->count() > 0) fn(c);
    c.threads = threads();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-based dynamic data sampling toolkit"};
  app.require_subcommand(1);
  app.add_option("--threads", g_threads,
                 "Worker threads (falls back to DYNAMICS_THREADS, then 1)");

  // ingest
  std::string ingest_in, ingest_out;
  bool ingest_normalize = false;
  auto* ingest = app.add_subcommand("ingest", "Validate and convert embeddings to EMB1");
  ingest->add_option("--in", ingest_in, "EMB1 or CSV (id,v1,...,vd) input")->required();
  ingest->add_option("--out", ingest_out, "EMB1 output")->required();
  ingest->add_flag("--normalize", ingest_normalize, "Scale rows to unit norm");

  // cluster
  std::string cl_emb, cl_model, cl_asg;
  KMeansOptions cl_opt;
  auto* cluster = app.add_subcommand("cluster", "Train spherical k-means and assign");
  cluster->add_option("--embeddings", cl_emb, "Normalized EMB1 file")->required();
  cluster->add_option("--k", cl_opt.k, "Number of clusters")->required();
  cluster->add_option("--iters", cl_opt.iterations, "Iterations")->capture_default_str();
  cluster->add_option("--max-points-per-centroid", cl_opt.max_points_per_centroid,
                      "Training subset cap per centroid")->capture_default_str();
  cluster->add_option("--seed", cl_opt.seed, "Seed")->capture_default_str();
  cluster->add_option("--out-model", cl_model, "Model output (CLM1)")->required();
  cluster->add_option("--out-assignment", cl_asg, "Assignment output");

  // merge
  std::string mg_model, mg_out, mg_asg, mg_asg_out;
  double mg_threshold = 0.7;
  auto* merge = app.add_subcommand("merge", "Merge centroids above a cosine threshold");
  merge->add_option("--model", mg_model, "Trained model")->required();
  merge->add_option("--threshold", mg_threshold, "Cosine threshold")->capture_default_str();
  merge->add_option("--out-model", mg_out, "Merged model output")->required();
  merge->add_option("--assignment", mg_asg, "Pre-merge assignment to recount");
  merge->add_option("--out-assignment", mg_asg_out, "Recounted assignment output");

  // scale
  std::string sc_asg, sc_counts, sc_out;
  double sc_alpha = 0.2, sc_total = 0.0, sc_fraction = 0.5;
  std::size_t sc_clusters = 0;
  auto* scale = app.add_subcommand("scale", "Compute per-cluster targets and rates");
  auto* sc_asg_opt = scale->add_option("--assignment", sc_asg, "Assignment file");
  auto* sc_counts_opt = scale->add_option("--counts", sc_counts, "JSON count vector");
  sc_asg_opt->excludes(sc_counts_opt);
  scale->add_option("--alpha", sc_alpha, "Scaling exponent")->capture_default_str();
  auto* sc_total_opt = scale->add_option("--target-total", sc_total, "Per-epoch budget");
  scale->add_option("--target-fraction", sc_fraction, "Budget as a fraction of samples")
      ->capture_default_str()->excludes(sc_total_opt);
  scale->add_option("--clusters", sc_clusters, "Cluster count (keeps trailing empties)");
  scale->add_option("--out", sc_out, "Plan output (default stdout)");

  // sample
  std::string sa_mode = "cluster-dynamic", sa_plan, sa_asg, sa_out;
  std::uint64_t sa_epoch = 0, sa_seed = 0, sa_epochs = 0;
  double sa_keep = 0.0;
  bool sa_shuffle = false;
  auto* sample = app.add_subcommand("sample", "Write one epoch manifest");
  sample->add_option("--mode", sa_mode, "Sampling mode")->capture_default_str();
  sample->add_option("--plan", sa_plan, "Plan JSON")->required();
  sample->add_option("--assignment", sa_asg, "Assignment file")->required();
  sample->add_option("--epoch", sa_epoch, "Epoch index")->capture_default_str();
  sample->add_option("--epochs", sa_epochs, "Configured epoch count (default epoch+1)");
  sample->add_option("--seed", sa_seed, "Seed")->capture_default_str();
  auto* sa_keep_opt = sample->add_option("--keep-fraction", sa_keep, "Random-mode keep fraction");
  sample->add_option("--out", sa_out, "Manifest output")->required();
  sample->add_flag("--shuffle", sa_shuffle, "Apply a seeded permutation");

  // analyze
  std::string an_counts, an_plan, an_manifest, an_out;
  std::uint64_t an_tail = 1000;
  std::size_t an_clusters = 0;
  auto* analyze = app.add_subcommand("analyze", "Imbalance report for counts, a plan or a manifest");
  auto* an_c = analyze->add_option("--counts", an_counts, "JSON count vector");
  auto* an_p = analyze->add_option("--plan", an_plan, "Plan JSON");
  auto* an_m = analyze->add_option("--manifest", an_manifest, "Manifest file");
  an_c->excludes(an_p)->excludes(an_m);
  an_p->excludes(an_m);
  analyze->add_option("--clusters", an_clusters, "Cluster count for manifests");
  analyze->add_option("--tail-threshold", an_tail, "Tail size threshold")->capture_default_str();
  analyze->add_option("--out", an_out, "Report output (default stdout)");

  // synth
  SyntheticSpec sy;
  std::string sy_out;
  auto* synth = app.add_subcommand("synth", "Generate a Zipf-imbalanced embedding set");
  synth->add_option("--clusters", sy.n_clusters, "Number of clusters")->capture_default_str();
  synth->add_option("--zipf", sy.zipf_exponent, "Zipf exponent")->capture_default_str();
  synth->add_option("--total", sy.total_samples, "Total samples")->capture_default_str();
  synth->add_option("--dim", sy.dim, "Embedding dim")->capture_default_str();
  synth->add_option("--noise", sy.intra_cluster_noise, "Per-component noise sigma")->capture_default_str();
  synth->add_option("--seed", sy.seed, "Seed")->capture_default_str();
  synth->add_option("--out", sy_out, "Output prefix")->required();

  // sweep-alpha
  std::string swa_counts, swa_asg, swa_plan, swa_out, swa_alphas = "0,0.2,0.4,0.6,0.8,1.0,2.0";
  double swa_total = 0.0, swa_fraction = 0.5;
  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Distribution of targets across alphas");
  auto* swa_c = sweep_alpha->add_option("--counts", swa_counts, "JSON count vector");
  auto* swa_a = sweep_alpha->add_option("--assignment", swa_asg, "Assignment file");
  auto* swa_p = sweep_alpha->add_option("--plan", swa_plan, "Plan JSON (its counts are used)");
  swa_c->excludes(swa_a)->excludes(swa_p);
  swa_a->excludes(swa_p);
  sweep_alpha->add_option("--alphas", swa_alphas, "Comma-separated alphas")->capture_default_str();
  auto* swa_t = sweep_alpha->add_option("--target-total", swa_total, "Per-epoch budget");
  sweep_alpha->add_option("--target-fraction", swa_fraction, "Budget fraction")
      ->capture_default_str()->excludes(swa_t);
  sweep_alpha->add_option("--out", swa_out, "Report output (default stdout)");

  // sweep-k
  std::string swk_emb, swk_out, swk_ks;
  PipelineParams swk;
  auto* sweep_k = app.add_subcommand("sweep-k", "Run the pipeline for several cluster counts");
  sweep_k->add_option("--embeddings", swk_emb, "EMB1 file (normalized on load)")->required();
  sweep_k->add_option("--ks", swk_ks, "Comma-separated cluster counts")->required();
  sweep_k->add_option("--iters", swk.iterations, "Iterations")->capture_default_str();
  sweep_k->add_option("--max-points-per-centroid", swk.max_points_per_centroid, "Subset cap")->capture_default_str();
  sweep_k->add_option("--threshold", swk.merge_threshold, "Merge threshold")->capture_default_str();
  sweep_k->add_option("--alpha", swk.alpha, "Scaling exponent")->capture_default_str();
  sweep_k->add_option("--target-fraction", swk.target_fraction, "Budget fraction")->capture_default_str();
  sweep_k->add_option("--seed", swk.seed, "Seed")->capture_default_str();
  sweep_k->add_option("--out", swk_out, "Report output (default stdout)");

  // simulate-coverage
  std::string cov_plan, cov_counts, cov_mode = "cluster-dynamic", cov_out;
  double cov_alpha = 0.2, cov_total = 0.0, cov_keep = 0.0;
  std::uint64_t cov_epochs = 6, cov_trials = 1000, cov_seed = 0;
  auto* coverage = app.add_subcommand("simulate-coverage", "Multi-epoch unique coverage");
  auto* cov_p = coverage->add_option("--plan", cov_plan, "Plan JSON");
  auto* cov_c = coverage->add_option("--counts", cov_counts, "JSON count vector");
  cov_p->excludes(cov_c);
  coverage->add_option("--alpha", cov_alpha, "Alpha when planning from counts")->capture_default_str();
  coverage->add_option("--target-total", cov_total, "Budget when planning from counts (default half)");
  coverage->add_option("--mode", cov_mode, "Sampling mode")->capture_default_str();
  coverage->add_option("--epochs", cov_epochs, "Epochs")->capture_default_str();
  coverage->add_option("--trials", cov_trials, "Trials")->capture_default_str();
  coverage->add_option("--seed", cov_seed, "Base seed")->capture_default_str();
  auto* cov_keep_opt = coverage->add_option("--keep-fraction", cov_keep, "Random-mode keep fraction");
  coverage->add_option("--out", cov_out, "Report output (default stdout)");

  // run / validate
  PipelineFlags run_flags, val_flags;
  std::string run_dir;
  auto* run = app.add_subcommand("run", "Full pipeline into a run directory");
  run_flags.attach(run);
  run->add_option("--run-dir", run_dir, "Exact run directory (default: timestamped)");
  auto* validate_cmd = app.add_subcommand("validate", "Check a pipeline config");
  val_flags.attach(validate_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const bool csv = std::filesystem::path(ingest_in).extension() == ".csv";
      EmbeddingStore store = csv ? read_csv(ingest_in) : load_embeddings(ingest_in);
      if (ingest_normalize) store = normalize(store);
      save_embeddings(store, ingest_out);
      std::cout << json{{"count", store.size()}, {"dim", store.dim()},
                        {"normalized", is_normalized(store)}}.dump() << '\n';
    } else if (*cluster) {
      const EmbeddingStore store = load_embeddings(cl_emb);
      cl_opt.threads = threads();
      const KMeansResult r = train_kmeans(store, cl_opt);
      save_model(r.model, cl_model);
      if (!cl_asg.empty()) save_assignment(assign(store, r.model, threads()), cl_asg);
      std::cout << json{{"k", r.model.k}, {"training_points", r.training_points},
                        {"objective", r.objective}}.dump() << '\n';
    } else if (*merge) {
      const ClusterModel model = load_model(mg_model);
      const ClusterModel merged = merge_centroids(model, mg_threshold);
      save_model(merged, mg_out);
      if (!mg_asg.empty()) {
        if (mg_asg_out.empty()) throw ConfigError("--assignment needs --out-assignment");
        const ClusterAssignment a = load_assignment(mg_asg, model.lineage.size());
        save_assignment(recount_after_merge(a, merged), mg_asg_out);
      }
      std::cout << json{{"k_in", model.k}, {"k_out", merged.k}}.dump() << '\n';
    } else if (*scale) {
      std::vector<std::uint64_t> counts;
      if (!sc_asg.empty()) counts = load_assignment(sc_asg, sc_clusters).counts;
      else if (!sc_counts.empty()) counts = read_counts(sc_counts);
      else throw ConfigError("scale needs --assignment or --counts");
      if (counts.size() < sc_clusters) counts.resize(sc_clusters, 0);
      std::uint64_t n = 0;
      for (auto c : counts) n += c;
      const double total = *sc_total_opt ? sc_total : sc_fraction * static_cast<double>(n);
      write_json(plan_to_json(compute_targets(counts, sc_alpha, total)), sc_out);
    } else if (*sample) {
      const ScalingPlan plan = load_plan(sa_plan);
      const ClusterAssignment a = load_assignment(sa_asg, plan.size());
      SamplerConfig cfg;
      cfg.mode = parse_mode(sa_mode);
      cfg.seed = sa_seed;
      cfg.epochs = sa_epochs ? sa_epochs : sa_epoch + 1;
      if (*sa_keep_opt) cfg.keep_fraction = sa_keep;
      EpochManifest m = sample_epoch(a, plan, cfg, sa_epoch, threads());
      if (sa_shuffle) shuffle_manifest(m);
      save_manifest(m, sa_out);
    } else if (*analyze) {
      json j;
      if (!an_counts.empty()) {
        j = report_json(distribution_report(read_counts(an_counts), an_tail), "counts");
      } else if (!an_plan.empty()) {
        const ScalingPlan plan = load_plan(an_plan);
        j = report_json(describe_plan(plan, an_tail), "plan");
        j["counts_report"] = to_json(distribution_report(plan.counts, an_tail));
      } else if (!an_manifest.empty()) {
        const EpochManifest m = load_manifest(an_manifest);
        const auto stats = manifest_stats(m, an_clusters);
        j = report_json(distribution_report(stats, an_tail), "manifest");
        j["per_cluster"] = stats;
      } else {
        throw ConfigError("analyze needs --counts, --plan or --manifest");
      }
      write_json(j, an_out);
    } else if (*synth) {
      const SyntheticData d = gen_synthetic(sy);
      save_embeddings(d.store, sy_out + ".emb");
      save_assignment(d.truth, sy_out + ".truth.bin");
      detail::write_file(sy_out + ".counts.json", json(d.sizes).dump() + "\n");
      std::cout << report_json(distribution_report(d.sizes), "synthetic").dump() << '\n';
    } else if (*sweep_alpha) {
      std::vector<std::uint64_t> counts;
      if (!swa_counts.empty()) counts = read_counts(swa_counts);
      else if (!swa_asg.empty()) counts = load_assignment(swa_asg).counts;
      else if (!swa_plan.empty()) counts = load_plan(swa_plan).counts;
      else throw ConfigError("sweep-alpha needs --counts, --assignment or --plan");
      std::uint64_t n = 0;
      for (auto c : counts) n += c;
      const double total = *swa_t ? swa_total : swa_fraction * static_cast<double>(n);
      const auto alphas = parse_list(swa_alphas);
      write_json(to_json(alpha_sweep(counts, alphas, total)), swa_out);
    } else if (*sweep_k) {
      swk.threads = threads();
      std::vector<std::uint32_t> ks;
      for (double v : parse_list(swk_ks)) ks.push_back(static_cast<std::uint32_t>(v));
      const EmbeddingStore store = normalize(load_embeddings(swk_emb));
      write_json(to_json(cluster_count_sweep(store, ks, swk)), swk_out);
    } else if (*coverage) {
      ScalingPlan plan;
      if (!cov_plan.empty()) {
        plan = load_plan(cov_plan);
      } else if (!cov_counts.empty()) {
        const auto counts = read_counts(cov_counts);
        std::uint64_t n = 0;
        for (auto c : counts) n += c;
        plan = compute_targets(counts, cov_alpha,
                               cov_total > 0 ? cov_total : 0.5 * static_cast<double>(n));
      } else {
        throw ConfigError("simulate-coverage needs --plan or --counts");
      }
      SamplerConfig cfg;
      cfg.mode = parse_mode(cov_mode);
      cfg.seed = cov_seed;
      cfg.epochs = cov_epochs;
      if (*cov_keep_opt) cfg.keep_fraction = cov_keep;
      write_json(to_json(coverage_sim(plan, cfg, cov_epochs, cov_trials, threads())), cov_out);
    } else if (*run) {
      const PipelineConfig cfg = run_flags.resolve();
      StageLogger logger;
      const RunResult r = run_pipeline(cfg, logger, run_dir);
      std::cout << json{{"run_dir", r.run_dir.string()},
                        {"manifests", r.manifests.size()},
                        {"live_k", r.live_k}}.dump() << '\n';
    } else if (*validate_cmd) {
      const PipelineConfig cfg = val_flags.resolve();
      json diags = json::array();
      for (const auto& d : validate(cfg)) diags.push_back({{"field", d.field}, {"message", d.message}});
      std::cout << json{{"diagnostics", diags}}.dump(2) << '\n';
      return diags.empty() ? 0 : 1;
    }
  } catch (const StageError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
