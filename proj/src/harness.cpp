#include "quee/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "quee/errors.hpp"
#include "quee/rng.hpp"

namespace quee {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

template <typename F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

}  // namespace

BootstrapStats bootstrap_ci(std::span<const double> outcomes, int num_splits) {
  if (num_splits < 2) throw std::invalid_argument("bootstrap_ci: num_splits must be >= 2");
  if (outcomes.size() < static_cast<std::size_t>(num_splits)) {
    throw std::invalid_argument("bootstrap_ci: fewer outcomes than splits");
  }

  const std::size_t n = outcomes.size();
  const std::size_t base = n / num_splits;
  const std::size_t remainder = n % num_splits;

  std::vector<double> subset_means;
  subset_means.reserve(num_splits);
  std::size_t offset = 0;
  double total = 0.0;
  for (int s = 0; s < num_splits; ++s) {
    const std::size_t size = base + (static_cast<std::size_t>(s) < remainder ? 1 : 0);
    double sum = 0.0;
    for (std::size_t i = offset; i < offset + size; ++i) sum += outcomes[i];
    offset += size;
    total += sum;
    subset_means.push_back(sum / static_cast<double>(size));
  }

  const double grand = std::accumulate(subset_means.begin(), subset_means.end(), 0.0) /
                       static_cast<double>(num_splits);
  double variance = 0.0;
  const auto [lo, hi] = std::minmax_element(subset_means.begin(), subset_means.end());
  if (*lo != *hi) {  // identical means are exactly zero variance, skip the rounding dust
    for (double m : subset_means) variance += (m - grand) * (m - grand);
    variance /= static_cast<double>(num_splits - 1);
  }

  BootstrapStats stats;
  stats.mean = total / static_cast<double>(n);
  stats.half_width = 1.96 * std::sqrt(variance) / std::sqrt(static_cast<double>(num_splits));
  return stats;
}

std::vector<double> default_lambdas() {
  std::vector<double> out;
  const double lo = 0.01;
  const double hi = 30.0;
  const int count = 16;
  for (int i = 0; i < count; ++i) {
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  }
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> out;
  for (int i = 0; i <= 20; ++i) out.push_back(static_cast<double>(i) / 20.0);
  return out;
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.topology.block_flops = {100.0, 100.0, 100.0};
  cfg.topology.bit_widths = {4, 8};
  cfg.lambdas = default_lambdas();
  cfg.thresholds = default_thresholds();
  return cfg;
}

void ExperimentConfig::validate() const {
  topology.validate();
  if (path_cap == 0) throw std::invalid_argument("config: path_cap must be >= 1");
  if (dataset_file.empty()) synthetic.validate();
  if (clusters < 1) throw std::invalid_argument("config: clusters must be >= 1");
  if (prefixes_per_gate < 1) throw std::invalid_argument("config: prefixes_per_gate must be >= 1");
  if (candidates_per_prefix < 0) {
    throw std::invalid_argument("config: candidates_per_prefix must be >= 0");
  }
  if (lambdas.empty()) throw std::invalid_argument("config: lambda list must be nonempty");
  if (!std::is_sorted(lambdas.begin(), lambdas.end())) {
    throw std::invalid_argument("config: lambda list must be ascending");
  }
  for (double l : lambdas) {
    if (l < 0) throw std::invalid_argument("config: lambdas must be nonnegative");
  }
  if (thresholds.empty()) throw std::invalid_argument("config: threshold list must be nonempty");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("config: threshold list must be ascending");
  }
  if (gate1_bits != 0 && !topology.has_bits(gate1_bits)) {
    throw std::invalid_argument("config: gate1_bits not in topology");
  }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("config: cannot open " + file);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config: " + std::string(e.what()));
  }

  ExperimentConfig cfg = defaults();
  try {
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.output_dir = doc.value("output_dir", cfg.output_dir);

    if (doc.contains("topology")) {
      const auto& t = doc.at("topology");
      cfg.topology.block_flops = t.at("block_flops").get<std::vector<double>>();
      cfg.topology.bit_widths = t.at("bit_widths").get<std::vector<int>>();
      if (t.contains("num_exits") &&
          t.at("num_exits").get<int>() != cfg.topology.num_exits()) {
        throw SchemaError("config: num_exits does not match block_flops length");
      }
      cfg.path_cap = t.value("path_cap", cfg.path_cap);
      if (t.contains("seed")) cfg.path_seed = t.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("dataset")) {
      const auto& d = doc.at("dataset");
      cfg.dataset_file = d.value("file", cfg.dataset_file);
      cfg.synthetic.num_classes = d.value("num_classes", cfg.synthetic.num_classes);
      cfg.synthetic.num_samples = d.value("num_samples", cfg.synthetic.num_samples);
      cfg.synthetic.train_fraction = d.value("train_fraction", cfg.synthetic.train_fraction);
      cfg.synthetic.validation_fraction =
          d.value("validation_fraction", cfg.synthetic.validation_fraction);
      cfg.synthetic.test_fraction = d.value("test_fraction", cfg.synthetic.test_fraction);
      cfg.synthetic.exit_gain = d.value("exit_gain", cfg.synthetic.exit_gain);
      cfg.synthetic.bit_gain = d.value("bit_gain", cfg.synthetic.bit_gain);
      cfg.synthetic.noise_scale = d.value("noise_scale", cfg.synthetic.noise_scale);
      cfg.synthetic.sharpness = d.value("sharpness", cfg.synthetic.sharpness);
      cfg.synthetic.test_difficulty_shift =
          d.value("test_difficulty_shift", cfg.synthetic.test_difficulty_shift);
      cfg.synthetic.bit_sensitivity_spread =
          d.value("bit_sensitivity_spread", cfg.synthetic.bit_sensitivity_spread);
    }
    if (doc.contains("discretizer")) {
      cfg.clusters = doc.at("discretizer").value("k", cfg.clusters);
    }
    if (doc.contains("predictor")) {
      const auto& p = doc.at("predictor");
      cfg.training.hidden_dim = p.value("hidden_dim", cfg.training.hidden_dim);
      cfg.training.path_embedding_dim =
          p.value("path_embedding_dim", cfg.training.path_embedding_dim);
      cfg.training.learning_rate = p.value("learning_rate", cfg.training.learning_rate);
      cfg.training.weight_decay = p.value("weight_decay", cfg.training.weight_decay);
      cfg.training.batch_size = p.value("batch_size", cfg.training.batch_size);
      cfg.training.max_epochs = p.value("max_epochs", cfg.training.max_epochs);
      cfg.training.patience = p.value("patience", cfg.training.patience);
      cfg.prefixes_per_gate = p.value("prefixes_per_gate", cfg.prefixes_per_gate);
      cfg.candidates_per_prefix = p.value("candidates_per_prefix", cfg.candidates_per_prefix);
    }
    if (doc.contains("routing")) {
      cfg.gate1_bits = doc.at("routing").value("gate1_bits", cfg.gate1_bits);
    }
    if (doc.contains("sweep")) {
      const auto& s = doc.at("sweep");
      if (s.contains("lambdas")) cfg.lambdas = s.at("lambdas").get<std::vector<double>>();
      if (s.contains("thresholds")) {
        cfg.thresholds = s.at("thresholds").get<std::vector<double>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

ModelBundle PipelineArtifacts::to_bundle() const {
  ModelBundle bundle;
  bundle.topology = config.topology;
  bundle.num_classes = dataset.num_classes;
  bundle.full_paths = full_paths;
  bundle.used_paths = used_paths;
  bundle.discretizer = discretizer;
  bundle.gates = gates;
  return bundle;
}

namespace {

PipelineArtifacts run_through_clustering(const ExperimentConfig& config) {
  config.validate();

  PipelineArtifacts a;
  a.config = config;

  stage("paths", [&] {
    a.full_paths = filter_monotone(enumerate_paths(config.topology));
    const std::uint64_t sample_seed =
        config.path_seed ? *config.path_seed : derive_seed(config.seed, "paths");
    a.used_paths = sample_paths(a.full_paths, config.path_cap, sample_seed);
    return 0;
  });

  stage("dataset", [&] {
    if (config.dataset_file.empty()) {
      SyntheticConfig syn = config.synthetic;
      syn.seed = derive_seed(config.seed, "dataset");
      a.dataset = generate_synthetic(syn, config.topology, a.full_paths);
    } else {
      a.dataset = load_dataset(config.dataset_file, config.topology, a.full_paths);
    }
    return 0;
  });

  stage("split-validation", [&] {
    // The validation split serves two masters: 80% fits the clusters, 20%
    // stops the gate training.
    std::vector<std::size_t> order(a.dataset.validation.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "valsplit"));
    rng.shuffle(order);
    const std::size_t n_cluster = (order.size() * 8) / 10;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const SampleRecord& r = a.dataset.validation[order[i]];
      if (i < n_cluster) {
        a.cluster_records.push_back(r);
      } else {
        a.stop_records.push_back(r);
      }
    }
    return 0;
  });

  stage("cluster", [&] {
    a.discretizer = fit_discretizer(a.cluster_records, a.used_paths, config.clusters,
                                    derive_seed(config.seed, "discretizer"));
    return 0;
  });

  return a;
}

}  // namespace

PipelineArtifacts run_clustering(const ExperimentConfig& config) {
  return run_through_clustering(config);
}

PipelineArtifacts run_training(const ExperimentConfig& config) {
  PipelineArtifacts a = run_through_clustering(config);

  stage("rows", [&] {
    a.train_rows = build_training_rows(a.dataset.train, a.used_paths, a.discretizer,
                                       config.topology, derive_seed(config.seed, "rows"),
                                       config.prefixes_per_gate, config.candidates_per_prefix);
    a.stop_rows = build_training_rows(a.stop_records, a.used_paths, a.discretizer,
                                      config.topology, derive_seed(config.seed, "stoprows"),
                                      config.prefixes_per_gate, config.candidates_per_prefix);
    return 0;
  });

  stage("train", [&] {
    for (std::size_t g = 0; g < a.train_rows.size(); ++g) {
      const int gate = static_cast<int>(g) + 2;
      if (a.train_rows[g].empty()) continue;
      a.gates.push_back(train_gate(a.train_rows[g], a.stop_rows[g], config.training,
                                   derive_seed(config.seed, "gate:" + std::to_string(gate))));
    }
    return 0;
  });

  return a;
}

std::vector<DecisionTrace> route_test_quee(const PipelineArtifacts& a, double lambda) {
  RoutingPolicy policy;
  policy.mode = PolicyMode::quee;
  policy.lambda = lambda;
  policy.gate1_bits = a.config.gate1_bits;
  std::vector<DecisionTrace> traces;
  traces.reserve(a.dataset.test.size());
  for (const SampleRecord& record : a.dataset.test) {
    traces.push_back(
        route_sample(record, a.gates, a.used_paths, a.config.topology, policy));
  }
  return traces;
}

std::vector<DecisionTrace> route_test_oracle(const PipelineArtifacts& a, double lambda) {
  std::vector<DecisionTrace> traces;
  traces.reserve(a.dataset.test.size());
  for (const SampleRecord& record : a.dataset.test) {
    traces.push_back(route_oracle(record, a.used_paths, a.config.topology, lambda));
  }
  return traces;
}

std::vector<DecisionTrace> route_test_threshold(const PipelineArtifacts& a, double threshold) {
  std::vector<DecisionTrace> traces;
  traces.reserve(a.dataset.test.size());
  for (const SampleRecord& record : a.dataset.test) {
    traces.push_back(route_threshold(record, a.full_paths, a.config.topology, threshold));
  }
  return traces;
}

std::vector<DecisionTrace> route_test_fixed(const PipelineArtifacts& a, const Path& path) {
  std::vector<DecisionTrace> traces;
  traces.reserve(a.dataset.test.size());
  for (const SampleRecord& record : a.dataset.test) {
    traces.push_back(route_fixed(record, path, a.config.topology));
  }
  return traces;
}

OperatingPoint summarize_traces(std::span<const DecisionTrace> traces, double parameter) {
  std::vector<double> correct;
  std::vector<double> cost;
  correct.reserve(traces.size());
  cost.reserve(traces.size());
  for (const DecisionTrace& t : traces) {
    correct.push_back(t.correct ? 1.0 : 0.0);
    cost.push_back(t.cost);
  }
  const BootstrapStats acc = bootstrap_ci(correct);
  const BootstrapStats c = bootstrap_ci(cost);
  OperatingPoint point;
  point.parameter = parameter;
  point.accuracy = acc.mean;
  point.accuracy_half_width = acc.half_width;
  point.cost = c.mean;
  point.cost_half_width = c.half_width;
  return point;
}

double mean_scalarized_loss(std::span<const DecisionTrace> traces, double lambda) {
  double total = 0.0;
  for (const DecisionTrace& t : traces) {
    total += (t.correct ? 0.0 : 1.0) + lambda * t.cost;
  }
  return total / static_cast<double>(traces.size());
}

SweepResult run_sweep(const PipelineArtifacts& a) {
  SweepResult result;
  result.quee.name = "quee";
  result.oracle.name = "oracle";
  result.threshold.name = "threshold";
  for (double lambda : a.config.lambdas) {
    result.quee.points.push_back(summarize_traces(route_test_quee(a, lambda), lambda));
    result.oracle.points.push_back(summarize_traces(route_test_oracle(a, lambda), lambda));
  }
  for (double threshold : a.config.thresholds) {
    result.threshold.points.push_back(
        summarize_traces(route_test_threshold(a, threshold), threshold));
  }
  for (const Path& path : a.used_paths.paths) {
    OperatingPoint point = summarize_traces(route_test_fixed(a, path), 0.0);
    point.label = path.key();
    result.fixed.push_back(std::move(point));
  }
  return result;
}

std::vector<GatePredictor> train_nbs_gates(const PipelineArtifacts& a, double lambda) {
  const auto rows = build_next_step_rows(a.dataset.train, a.used_paths, a.discretizer,
                                         a.config.topology, lambda,
                                         derive_seed(a.config.seed, "nbsrows"),
                                         a.config.prefixes_per_gate);
  const auto stop = build_next_step_rows(a.stop_records, a.used_paths, a.discretizer,
                                         a.config.topology, lambda,
                                         derive_seed(a.config.seed, "nbsstoprows"),
                                         a.config.prefixes_per_gate);
  TrainConfig train_cfg = a.config.training;
  train_cfg.sigmoid_output = false;  // targets carry the cost term and leave [0, 1]

  std::vector<GatePredictor> gates;
  for (std::size_t g = 0; g < rows.size(); ++g) {
    const int gate = static_cast<int>(g) + 2;
    if (rows[g].empty()) continue;
    gates.push_back(train_gate(rows[g], stop[g], train_cfg,
                               derive_seed(a.config.seed, "nbsgate:" + std::to_string(gate))));
  }
  return gates;
}

std::vector<DecisionTrace> route_test_nbs(const PipelineArtifacts& a,
                                          std::span<const GatePredictor> nbs_gates) {
  std::vector<DecisionTrace> traces;
  traces.reserve(a.dataset.test.size());
  for (const SampleRecord& record : a.dataset.test) {
    traces.push_back(route_next_best_step(record, nbs_gates, a.used_paths, a.config.topology,
                                          a.config.gate1_bits));
  }
  return traces;
}

Curve run_nbs_curve(const PipelineArtifacts& a, std::span<const double> lambdas) {
  Curve curve;
  curve.name = "next-best-step";
  for (double lambda : lambdas) {
    const std::vector<GatePredictor> gates = train_nbs_gates(a, lambda);
    curve.points.push_back(summarize_traces(route_test_nbs(a, gates), lambda));
  }
  return curve;
}

std::vector<std::vector<TrainingRow>> build_test_rows(const PipelineArtifacts& a) {
  return build_training_rows(a.dataset.test, a.used_paths, a.discretizer, a.config.topology,
                             derive_seed(a.config.seed, "testrows"), a.config.prefixes_per_gate,
                             a.config.candidates_per_prefix);
}

RmseReport predictor_rmse(std::span<const GatePredictor> gates,
                          std::span<const std::vector<TrainingRow>> rows_per_gate) {
  RmseReport report;
  double pooled_sq = 0.0;
  std::size_t pooled_n = 0;
  for (const GatePredictor& gate : gates) {
    const std::size_t g = static_cast<std::size_t>(gate.gate) - 2;
    if (g >= rows_per_gate.size() || rows_per_gate[g].empty()) continue;
    const double mse = mean_squared_error(gate, rows_per_gate[g]);
    report.per_gate.emplace_back(gate.gate, std::sqrt(mse));
    pooled_sq += mse * static_cast<double>(rows_per_gate[g].size());
    pooled_n += rows_per_gate[g].size();
  }
  report.overall = pooled_n == 0 ? 0.0 : std::sqrt(pooled_sq / static_cast<double>(pooled_n));
  return report;
}

RmseReport predictor_rmse(const PipelineArtifacts& a) {
  return predictor_rmse(a.gates, build_test_rows(a));
}

std::vector<DegradationEntry> degradation_study(const PipelineArtifacts& a,
                                                std::span<const double> noise_levels) {
  const auto test_rows = build_test_rows(a);  // clean targets: RMSE is measured against these

  std::vector<DegradationEntry> entries;
  for (std::size_t level = 0; level < noise_levels.size(); ++level) {
    const double sigma = noise_levels[level];

    // Perturb the regression targets themselves: one draw per cluster
    // delegate, so the corruption is consistent across every row that shares
    // the cluster and cannot be averaged out by the fit.
    DiscretizerModel corrupted = a.discretizer;
    Rng rng(derive_seed(a.config.seed, "degrade:" + std::to_string(level)));
    for (PathClusterModel& pcm : corrupted.paths) {
      for (double& delegate : pcm.delegates) {
        delegate = std::clamp(delegate + sigma * rng.next_normal(), 0.0, 1.0);
      }
    }

    PipelineArtifacts retrained = a;
    retrained.gates.clear();
    const auto noisy = build_training_rows(
        a.dataset.train, a.used_paths, corrupted, a.config.topology,
        derive_seed(a.config.seed, "rows"), a.config.prefixes_per_gate,
        a.config.candidates_per_prefix);
    const auto noisy_stop = build_training_rows(
        a.stop_records, a.used_paths, corrupted, a.config.topology,
        derive_seed(a.config.seed, "stoprows"), a.config.prefixes_per_gate,
        a.config.candidates_per_prefix);
    for (std::size_t g = 0; g < noisy.size(); ++g) {
      const int gate = static_cast<int>(g) + 2;
      if (noisy[g].empty()) continue;
      retrained.gates.push_back(
          train_gate(noisy[g], noisy_stop[g], a.config.training,
                     derive_seed(a.config.seed, "gate:" + std::to_string(gate))));
    }

    DegradationEntry entry;
    entry.sigma = sigma;
    entry.rmse = predictor_rmse(retrained.gates, test_rows);
    entry.curve.name = "quee";
    for (double lambda : a.config.lambdas) {
      entry.curve.points.push_back(
          summarize_traces(route_test_quee(retrained, lambda), lambda));
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<EceStudyEntry> ece_study(const PipelineArtifacts& a, std::vector<int> ks,
                                     bool with_curves) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  std::vector<EceStudyEntry> entries;
  for (int k : ks) {
    EceStudyEntry entry;
    entry.k = k;
    const DiscretizerModel disc = fit_discretizer(a.cluster_records, a.used_paths, k,
                                                  derive_seed(a.config.seed, "discretizer"));
    entry.ece = compute_ece(disc, a.dataset.test, a.used_paths);

    if (with_curves) {
      PipelineArtifacts variant = a;
      variant.discretizer = disc;
      variant.train_rows = build_training_rows(
          a.dataset.train, a.used_paths, disc, a.config.topology,
          derive_seed(a.config.seed, "rows"), a.config.prefixes_per_gate,
          a.config.candidates_per_prefix);
      variant.stop_rows = build_training_rows(
          a.stop_records, a.used_paths, disc, a.config.topology,
          derive_seed(a.config.seed, "stoprows"), a.config.prefixes_per_gate,
          a.config.candidates_per_prefix);
      variant.gates.clear();
      for (std::size_t g = 0; g < variant.train_rows.size(); ++g) {
        const int gate = static_cast<int>(g) + 2;
        if (variant.train_rows[g].empty()) continue;
        variant.gates.push_back(
            train_gate(variant.train_rows[g], variant.stop_rows[g], a.config.training,
                       derive_seed(a.config.seed, "gate:" + std::to_string(gate))));
      }
      entry.curve.name = "quee";
      for (double lambda : a.config.lambdas) {
        entry.curve.points.push_back(
            summarize_traces(route_test_quee(variant, lambda), lambda));
      }
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_curve_file(const Curve& curve, const std::string& parameter_name,
                      const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_curve_file: cannot open " + file);
  out << parameter_name << "\taccuracy\taccuracy_ci95\tcost\tcost_ci95\n";
  for (const OperatingPoint& p : curve.points) {
    out << format_double(p.parameter) << '\t' << format_double(p.accuracy) << '\t'
        << format_double(p.accuracy_half_width) << '\t' << format_double(p.cost) << '\t'
        << format_double(p.cost_half_width) << '\n';
  }
}

void write_fixed_points_file(std::span<const OperatingPoint> points, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_fixed_points_file: cannot open " + file);
  out << "path\taccuracy\taccuracy_ci95\tcost\tcost_ci95\n";
  for (const OperatingPoint& p : points) {
    out << p.label << '\t' << format_double(p.accuracy) << '\t'
        << format_double(p.accuracy_half_width) << '\t' << format_double(p.cost) << '\t'
        << format_double(p.cost_half_width) << '\n';
  }
}

PipelineOutput run_pipeline(const ExperimentConfig& config) {
  PipelineOutput out;
  out.artifacts = run_training(config);
  out.sweep = stage("sweep", [&] { return run_sweep(out.artifacts); });

  stage("write", [&] {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    save_model(out.artifacts.to_bundle(), (dir / "model.json").string());
    write_curve_file(out.sweep.quee, "lambda", (dir / "curve_quee.tsv").string());
    write_curve_file(out.sweep.oracle, "lambda", (dir / "curve_oracle.tsv").string());
    write_curve_file(out.sweep.threshold, "threshold",
                     (dir / "curve_threshold.tsv").string());
    write_fixed_points_file(out.sweep.fixed, (dir / "fixed_paths.tsv").string());
    return 0;
  });
  return out;
}

}  // namespace quee
