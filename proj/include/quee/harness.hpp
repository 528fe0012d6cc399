#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quee/dataset.hpp"
#include "quee/discretizer.hpp"
#include "quee/model_io.hpp"
#include "quee/path_space.hpp"
#include "quee/predictor.hpp"
#include "quee/router.hpp"

namespace quee {

struct BootstrapStats {
  double mean = 0.0;
  double half_width = 0.0;  // 95% CI, normal approximation
};

// Splits the outcomes into `num_splits` near-equal contiguous subsets
// (remainder on the leading ones) and reports mean +/- 1.96 * std(subset
// means) / sqrt(num_splits). Order-preserving: randomization, when wanted,
// comes from upstream seeding of the outcome order.
BootstrapStats bootstrap_ci(std::span<const double> outcomes, int num_splits = 10);

struct OperatingPoint {
  double parameter = 0.0;  // lambda, threshold, or unused for fixed paths
  std::string label;       // path key for fixed-path points
  double accuracy = 0.0;
  double accuracy_half_width = 0.0;
  double cost = 0.0;
  double cost_half_width = 0.0;
};

struct Curve {
  std::string name;
  std::vector<OperatingPoint> points;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "out";

  NetworkTopology topology;
  std::size_t path_cap = 50;
  std::optional<std::uint64_t> path_seed;  // unset: derived from the master seed

  std::string dataset_file;  // empty: synthesize
  SyntheticConfig synthetic;

  int clusters = 20;

  TrainConfig training;
  int prefixes_per_gate = 2;
  int candidates_per_prefix = 0;

  int gate1_bits = 0;
  std::vector<double> lambdas;     // nonempty, ascending
  std::vector<double> thresholds;  // nonempty, ascending

  static ExperimentConfig defaults();
  static ExperimentConfig from_file(const std::string& file);
  void validate() const;
};

// Sixteen log-spaced trade-off weights spanning accuracy-dominant (small) to
// cost-dominant (large) routing.
std::vector<double> default_lambdas();
std::vector<double> default_thresholds();

// Everything produced up to (and including) gate training.
struct PipelineArtifacts {
  ExperimentConfig config;
  PathSet full_paths;
  PathSet used_paths;
  SplitDataset dataset;
  std::vector<SampleRecord> cluster_records;  // validation slice for k-means
  std::vector<SampleRecord> stop_records;     // validation slice for early stopping
  DiscretizerModel discretizer;
  std::vector<std::vector<TrainingRow>> train_rows;  // per gate
  std::vector<std::vector<TrainingRow>> stop_rows;
  std::vector<GatePredictor> gates;

  ModelBundle to_bundle() const;
};

// gen/load -> paths -> clustering -> rows -> gate training. Exceptions carry
// the failing stage name.
PipelineArtifacts run_training(const ExperimentConfig& config);

// Same pipeline cut short after the discretizer fit; rows and gates stay empty.
PipelineArtifacts run_clustering(const ExperimentConfig& config);

std::vector<DecisionTrace> route_test_quee(const PipelineArtifacts& artifacts, double lambda);
std::vector<DecisionTrace> route_test_oracle(const PipelineArtifacts& artifacts, double lambda);
std::vector<DecisionTrace> route_test_threshold(const PipelineArtifacts& artifacts,
                                                double threshold);
std::vector<DecisionTrace> route_test_fixed(const PipelineArtifacts& artifacts, const Path& path);

OperatingPoint summarize_traces(std::span<const DecisionTrace> traces, double parameter);

// Mean cost-based 0-1 loss: [error] + lambda * cost averaged over the traces.
double mean_scalarized_loss(std::span<const DecisionTrace> traces, double lambda);

struct SweepResult {
  Curve quee;
  Curve oracle;
  Curve threshold;
  std::vector<OperatingPoint> fixed;  // one point per candidate path
};

SweepResult run_sweep(const PipelineArtifacts& artifacts);

// Trains one set of next-best-step gates for every lambda (the trade-off is
// baked into their targets) and routes the test split with each.
std::vector<GatePredictor> train_nbs_gates(const PipelineArtifacts& artifacts, double lambda);
std::vector<DecisionTrace> route_test_nbs(const PipelineArtifacts& artifacts,
                                          std::span<const GatePredictor> nbs_gates);
Curve run_nbs_curve(const PipelineArtifacts& artifacts, std::span<const double> lambdas);

struct RmseReport {
  std::vector<std::pair<int, double>> per_gate;  // (gate, rmse)
  double overall = 0.0;
};

// RMSE of the gate heads against discretized targets on rows built from the
// test split.
RmseReport predictor_rmse(const PipelineArtifacts& artifacts);
RmseReport predictor_rmse(std::span<const GatePredictor> gates,
                          std::span<const std::vector<TrainingRow>> rows_per_gate);

// Rows the RMSE report is computed over.
std::vector<std::vector<TrainingRow>> build_test_rows(const PipelineArtifacts& artifacts);

struct DegradationEntry {
  double sigma = 0.0;
  RmseReport rmse;
  Curve curve;
};

// Retrains the gates on targets perturbed with zero-mean Gaussian noise
// (clamped back to [0, 1]) and reports test RMSE plus the resulting curve per
// noise level. Level 0 reproduces the baseline bit-exactly.
std::vector<DegradationEntry> degradation_study(const PipelineArtifacts& artifacts,
                                                std::span<const double> noise_levels);

struct EceStudyEntry {
  int k = 0;
  EceReport ece;
  Curve curve;  // empty unless curves were requested
};

// Refits the discretizer per cluster count (duplicates dropped) and reports
// the test ECE; optionally retrains gates and sweeps the curve for each K.
std::vector<EceStudyEntry> ece_study(const PipelineArtifacts& artifacts, std::vector<int> ks,
                                     bool with_curves = false);

// Full experiment: training, sweep, model file and curve files under
// config.output_dir. Returns what it computed.
struct PipelineOutput {
  PipelineArtifacts artifacts;
  SweepResult sweep;
};
PipelineOutput run_pipeline(const ExperimentConfig& config);

void write_curve_file(const Curve& curve, const std::string& parameter_name,
                      const std::string& file);
void write_fixed_points_file(std::span<const OperatingPoint> points, const std::string& file);

}  // namespace quee
