#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quee/dataset.hpp"
#include "quee/path_space.hpp"

namespace quee {

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;        // one entry per input point
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

// Lloyd's algorithm with k-means++ seeding. `restarts` independent runs, the
// one with the lowest inertia wins. Iterates until the largest centroid shift
// drops below `tolerance` or `max_iterations` is hit. Assignment ties go to
// the lowest cluster index; a cluster that loses all members keeps its
// previous centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int restarts = 10, int max_iterations = 300, double tolerance = 1e-6);

// Per-path clustering of the predicted-probability vectors plus the empirical
// error rate of each cluster (the regression targets).
struct PathClusterModel {
  std::string path_key;
  std::vector<std::vector<double>> centroids;
  std::vector<double> delegates;            // error rate per cluster
  std::vector<std::size_t> member_counts;   // fitting samples per cluster
  double fallback_delegate = 0.0;           // path-global error rate

  // Member counts weighted by delegates recover the path-global error exactly;
  // empty clusters carry the fallback and are skipped during assignment.
};

struct DiscretizerModel {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<PathClusterModel> paths;  // canonical path order
  std::unordered_map<std::string, std::size_t> index;

  const PathClusterModel& for_path(const std::string& path_key) const;  // throws invalid_argument
};

DiscretizerModel fit_discretizer(std::span<const SampleRecord> records, const PathSet& paths,
                                 int k, std::uint64_t seed);

// Delegate of the nearest non-empty centroid (squared Euclidean, ties to the
// lowest cluster index).
double assign_target(const DiscretizerModel& model, const Path& path,
                     std::span<const double> probs);

struct EceReport {
  double overall = 0.0;
  std::vector<std::pair<std::string, double>> per_path;
};

// Calibration of the delegates: per path, sort 1 - delegate ascending, split
// into `num_bins` equal-count bins (remainder on the leading bins), average
// |bin accuracy - bin mean confidence| weighted by bin size; the overall value
// is the unweighted mean over paths.
EceReport compute_ece(const DiscretizerModel& model, std::span<const SampleRecord> records,
                      const PathSet& paths, int num_bins = 15);

}  // namespace quee
