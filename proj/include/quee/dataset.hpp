#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quee/path_space.hpp"

namespace quee {

// One labeled sample together with the predicted-probability vector every
// candidate classifier produced for it. This is the whole interface to the
// backbone: nothing upstream of these vectors is modeled.
struct SampleRecord {
  std::string id;
  int label = 0;
  std::unordered_map<std::string, std::vector<double>> probs;  // path key -> vector

  const std::vector<double>& probs_for(const std::string& path_key) const;  // throws DataError
  bool has_path(const std::string& path_key) const { return probs.count(path_key) > 0; }
};

struct SplitDataset {
  int num_classes = 0;
  std::vector<std::string> path_keys;  // canonical order, shared by all records
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> validation;
  std::vector<SampleRecord> test;
};

struct SyntheticConfig {
  int num_classes = 10;
  std::size_t num_samples = 10000;
  double train_fraction = 0.5;
  double validation_fraction = 0.3;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  // Per-path skill is exit_gain * depth + bit_gain * mean_bits; a sample's
  // correctness probability is logistic(skill - difficulty) with one shared
  // standard-normal difficulty per sample, so paths are correlated.
  double exit_gain = 0.5;
  double bit_gain = 0.125;
  // Relative per-sample spread of the bit gain: some samples are served by
  // low precision, others need the full width. This is what makes the best
  // path sample-dependent rather than just the best stopping depth.
  double bit_sensitivity_spread = 0.5;
  // Relative jitter on the off-prediction probability mass.
  double noise_scale = 0.25;
  // Margin of the confidence map: predicted-class mass is
  // clip(q, 1/num_classes + sharpness, 1 - sharpness).
  double sharpness = 0.05;
  // Added to the difficulty of test samples. Backbones tuned against the
  // validation split do slightly worse on held-out data; correctness given
  // the probability vector is unaffected, only the marginal rates move.
  double test_difficulty_shift = 0.5;

  void validate() const;  // throws std::invalid_argument
};

// Index of the largest entry, ties broken toward the lowest class index.
int argmax_class(std::span<const double> probs);

SplitDataset generate_synthetic(const SyntheticConfig& config, const NetworkTopology& topology,
                                const PathSet& paths);

// Newline-delimited file: a header line {format, version, num_classes,
// path_keys} followed by one JSON record per line {id, split, label, probs}.
// Doubles survive a save/load cycle bit-exactly.
void save_dataset(const SplitDataset& dataset, const std::string& file);
SplitDataset load_dataset(const std::string& file, const NetworkTopology& topology,
                          const PathSet& paths);

// Fraction of records whose argmax for `path` equals the label.
double empirical_accuracy(std::span<const SampleRecord> records, const Path& path);

}  // namespace quee
