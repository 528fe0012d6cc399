#include "quee/discretizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "quee/errors.hpp"
#include "quee/rng.hpp"

namespace quee {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

int nearest_centroid(std::span<const double> point,
                     const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_dist = squared_distance(point, centroids[0]);
  for (int c = 1; c < static_cast<int>(centroids.size()); ++c) {
    const double dist = squared_distance(point, centroids[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& points,
                                               int k, Rng& rng) {
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.next_index(points.size())]);

  std::vector<double> dist(points.size());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& centroid : centroids) {
        d = std::min(d, squared_distance(points[i], centroid));
      }
      dist[i] = d;
      total += d;
    }
    if (total <= 0.0) {
      // All remaining points coincide with a centroid; fall back to uniform.
      centroids.push_back(points[rng.next_index(points.size())]);
      continue;
    }
    double target = rng.next_double() * total;
    std::size_t chosen = points.size() - 1;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      cumulative += dist[i];
      if (cumulative >= target) {
        chosen = i;
        break;
      }
    }
    centroids.push_back(points[chosen]);
  }
  return centroids;
}

KMeansResult lloyd(const std::vector<std::vector<double>>& points, int k, Rng& rng,
                   int max_iterations, double tolerance) {
  const std::size_t dim = points[0].size();
  KMeansResult result;
  result.centroids = kmeanspp_init(points, k, rng);
  result.assignment.assign(points.size(), 0);

  for (int iter = 0; iter < max_iterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      result.assignment[i] = nearest_centroid(points[i], result.centroids);
      inertia += squared_distance(points[i], result.centroids[result.assignment[i]]);
    }
    result.inertia = inertia;
    result.inertia_trace.push_back(inertia);

    std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const int c = result.assignment[i];
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) means[c][j] += points[i][j];
    }
    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the stale centroid
      for (std::size_t j = 0; j < dim; ++j) means[c][j] /= static_cast<double>(counts[c]);
      max_shift = std::max(max_shift, std::sqrt(squared_distance(means[c], result.centroids[c])));
      result.centroids[c] = std::move(means[c]);
    }
    if (max_shift < tolerance) break;
  }

  // Final assignment and inertia against the converged centroids.
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    result.assignment[i] = nearest_centroid(points[i], result.centroids);
    inertia += squared_distance(points[i], result.centroids[result.assignment[i]]);
  }
  result.inertia = inertia;
  result.inertia_trace.push_back(inertia);
  return result;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int restarts, int max_iterations, double tolerance) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (static_cast<std::size_t>(k) > points.size()) {
    throw std::invalid_argument("kmeans: k exceeds number of points");
  }
  if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");

  KMeansResult best;
  bool have_best = false;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "restart:" + std::to_string(r)));
    KMeansResult run = lloyd(points, k, rng, max_iterations, tolerance);
    if (!have_best || run.inertia < best.inertia) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

const PathClusterModel& DiscretizerModel::for_path(const std::string& path_key) const {
  auto it = index.find(path_key);
  if (it == index.end()) {
    throw std::invalid_argument("discretizer: unknown path " + path_key);
  }
  return paths[it->second];
}

DiscretizerModel fit_discretizer(std::span<const SampleRecord> records, const PathSet& paths,
                                 int k, std::uint64_t seed) {
  if (records.empty()) throw std::invalid_argument("fit_discretizer: no records");
  if (k < 1) throw std::invalid_argument("fit_discretizer: k must be >= 1");
  if (static_cast<std::size_t>(k) > records.size()) {
    throw std::invalid_argument("fit_discretizer: k exceeds number of records");
  }

  DiscretizerModel model;
  model.k = k;
  model.seed = seed;
  for (const Path& path : paths.paths) {
    const std::string key = path.key();
    std::vector<std::vector<double>> points;
    points.reserve(records.size());
    std::vector<bool> wrong;
    wrong.reserve(records.size());
    for (const SampleRecord& record : records) {
      const std::vector<double>& v = record.probs_for(key);
      points.push_back(v);
      wrong.push_back(argmax_class(v) != record.label);
    }

    KMeansResult clusters = kmeans(points, k, derive_seed(seed, "kmeans:" + key));

    PathClusterModel pcm;
    pcm.path_key = key;
    pcm.centroids = std::move(clusters.centroids);
    pcm.member_counts.assign(k, 0);
    std::vector<std::size_t> wrong_counts(k, 0);
    std::size_t total_wrong = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const int c = clusters.assignment[i];
      ++pcm.member_counts[c];
      if (wrong[i]) {
        ++wrong_counts[c];
        ++total_wrong;
      }
    }
    pcm.fallback_delegate = static_cast<double>(total_wrong) / static_cast<double>(points.size());
    pcm.delegates.assign(k, 0.0);
    for (int c = 0; c < k; ++c) {
      pcm.delegates[c] = pcm.member_counts[c] == 0
                             ? pcm.fallback_delegate
                             : static_cast<double>(wrong_counts[c]) /
                                   static_cast<double>(pcm.member_counts[c]);
    }
    model.index.emplace(key, model.paths.size());
    model.paths.push_back(std::move(pcm));
  }
  return model;
}

double assign_target(const DiscretizerModel& model, const Path& path,
                     std::span<const double> probs) {
  const PathClusterModel& pcm = model.for_path(path.key());
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(pcm.centroids.size()); ++c) {
    if (pcm.member_counts[c] == 0) continue;
    const double dist = squared_distance(probs, pcm.centroids[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  if (best < 0) return pcm.fallback_delegate;  // every cluster empty: degenerate fit
  return pcm.delegates[best];
}

EceReport compute_ece(const DiscretizerModel& model, std::span<const SampleRecord> records,
                      const PathSet& paths, int num_bins) {
  if (num_bins < 1) throw std::invalid_argument("compute_ece: num_bins must be >= 1");
  if (records.size() < static_cast<std::size_t>(num_bins)) {
    throw std::invalid_argument("compute_ece: fewer records than bins");
  }
  if (paths.size() == 0) throw std::invalid_argument("compute_ece: empty path set");

  EceReport report;
  for (const Path& path : paths.paths) {
    const std::string key = path.key();
    const std::size_t n = records.size();
    std::vector<std::pair<double, bool>> scored;  // (confidence, correct)
    scored.reserve(n);
    for (const SampleRecord& record : records) {
      const std::vector<double>& v = record.probs_for(key);
      const double confidence = 1.0 - assign_target(model, path, v);
      scored.emplace_back(confidence, argmax_class(v) == record.label);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    const std::size_t base = n / num_bins;
    const std::size_t remainder = n % num_bins;
    double ece = 0.0;
    std::size_t offset = 0;
    for (int b = 0; b < num_bins; ++b) {
      const std::size_t size = base + (static_cast<std::size_t>(b) < remainder ? 1 : 0);
      double confidence_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t i = offset; i < offset + size; ++i) {
        confidence_sum += scored[i].first;
        if (scored[i].second) ++correct;
      }
      offset += size;
      if (size == 0) continue;
      const double accuracy = static_cast<double>(correct) / static_cast<double>(size);
      const double mean_confidence = confidence_sum / static_cast<double>(size);
      ece += (static_cast<double>(size) / static_cast<double>(n)) *
             std::abs(accuracy - mean_confidence);
    }
    report.per_path.emplace_back(key, ece);
    report.overall += ece;
  }
  report.overall /= static_cast<double>(report.per_path.size());
  return report;
}

}  // namespace quee
