#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quee/dataset.hpp"
#include "quee/discretizer.hpp"
#include "quee/path_space.hpp"

namespace quee {

// Gate input: current probability vector, previous probability vector,
// entropy(current), entropy(previous), max(previous), max(current).
// Length is always 2 * num_classes + 4.
struct GateFeatures {
  std::vector<double> u;
};

// Candidate path as a fixed-length vector: bits, zero padding up to num_exits
// entries, then the depth. Length is num_exits + 1.
struct PathEncoding {
  std::vector<double> p;
};

double entropy(std::span<const double> probs);  // natural log

// `previous` may be empty when only one classifier has run (gate 2); the
// current vector fills both slots in that case.
GateFeatures build_features(std::span<const double> current, std::span<const double> previous,
                            int num_classes);

PathEncoding encode_path(const Path& path, int num_exits);

// Two-layer feedforward net: (features || encoding) -> hidden (rectifier) -> 1,
// squashed through a sigmoid when the target is a probability. The optional
// path embedding projects the encoding to a smaller vector before the
// concatenation.
struct GatePredictor {
  int gate = 0;  // decision point j in 2..num_exits
  bool sigmoid_output = true;
  int feature_dim = 0;
  int encoding_dim = 0;
  int path_embedding_dim = 0;  // 0 disables the projection
  int hidden_dim = 0;

  std::vector<double> embed_w;  // path_embedding_dim x encoding_dim, row-major
  std::vector<double> w1;       // hidden_dim x input_dim, row-major
  std::vector<double> b1;       // hidden_dim
  std::vector<double> w2;       // hidden_dim
  double b2 = 0.0;

  int input_dim() const {
    return feature_dim + (path_embedding_dim > 0 ? path_embedding_dim : encoding_dim);
  }
  std::size_t parameter_count() const;

  double predict(std::span<const double> features, std::span<const double> encoding) const;
};

GatePredictor make_gate_predictor(int gate, int feature_dim, int encoding_dim, int hidden_dim,
                                  int path_embedding_dim, bool sigmoid_output,
                                  std::uint64_t seed);

// Forward pass; output is in (0, 1) for the sigmoid head.
double predict_pe(const GatePredictor& predictor, const GateFeatures& features,
                  const PathEncoding& encoding);

struct TrainingRow {
  int gate = 0;
  std::vector<double> features;
  std::vector<double> encoding;
  double target = 0.0;  // clustered error rate; next-best-step rows carry a loss value
};

// One row per (record, sampled prefix, candidate continuation) per gate.
// Features come from the prefix's own vector and the one before it; the target
// is the candidate's clustered error rate. Result is indexed by gate - 2.
std::vector<std::vector<TrainingRow>> build_training_rows(
    std::span<const SampleRecord> records, const PathSet& paths,
    const DiscretizerModel& discretizer, const NetworkTopology& topology, std::uint64_t seed,
    int prefixes_per_gate = 2, int candidates_per_prefix = 0 /* 0 = all */);

// Same row geometry, but the target is the best achievable scalarized loss for
// one step: min over continuations of lambda * cost + clustered error. The
// exit option encodes the prefix itself. Targets leave [0, 1], so these rows
// train a linear-output head.
std::vector<std::vector<TrainingRow>> build_next_step_rows(
    std::span<const SampleRecord> records, const PathSet& paths,
    const DiscretizerModel& discretizer, const NetworkTopology& topology, double lambda,
    std::uint64_t seed, int prefixes_per_gate = 2);

struct TrainConfig {
  int hidden_dim = 16;
  int path_embedding_dim = 0;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 512;
  int max_epochs = 20;
  int patience = 3;
  bool sigmoid_output = true;
};

// Mean squared error of the predictor over the rows.
double mean_squared_error(const GatePredictor& predictor, std::span<const TrainingRow> rows);

// Mean loss over the batch and its gradient with respect to every parameter,
// laid out as embed_w || w1 || b1 || w2 || b2.
double loss_and_gradient(const GatePredictor& predictor, std::span<const TrainingRow> batch,
                         std::vector<double>& gradient);

// Adam with decoupled weight decay, seeded shuffling, and early stopping on
// the validation rows (patience in epochs). Returns the weights with the best
// validation MSE seen, never worse than the initialization. When
// `validation_rows` is empty the training rows double as the stopping set.
GatePredictor train_gate(std::span<const TrainingRow> rows,
                         std::span<const TrainingRow> validation_rows, const TrainConfig& config,
                         std::uint64_t seed);

}  // namespace quee
