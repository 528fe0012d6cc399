#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace quee {

// Network shape seen by the routing problem: E blocks, each followed by an
// exit, and B bit-widths selectable per block.
struct NetworkTopology {
  std::vector<double> block_flops;  // FLOPS per block, one entry per exit
  std::vector<int> bit_widths;      // strictly increasing, all positive

  int num_exits() const { return static_cast<int>(block_flops.size()); }
  int num_levels() const { return static_cast<int>(bit_widths.size()); }
  int max_bits() const { return bit_widths.back(); }
  bool has_bits(int b) const;

  void validate() const;  // throws std::invalid_argument
};

// One candidate classifier: the bit-width chosen for each traversed block,
// exiting after the last entry.
struct Path {
  std::vector<int> bits;

  int depth() const { return static_cast<int>(bits.size()); }
  bool empty() const { return bits.empty(); }
  double mean_bits() const;
  Path prefix(int length) const;
  bool is_prefix_of(const Path& other) const;

  // Canonical text key, e.g. "8-6-6". Used in every file format.
  std::string key() const;
  static Path from_key(const std::string& key);

  friend bool operator==(const Path&, const Path&) = default;
};

// Canonical order: shorter paths first, equal lengths sorted by
// lexicographically descending bits.
bool canonical_less(const Path& a, const Path& b);

// Argmin tie-break used by every selector: lower cost wins, then the
// lexicographically greater bit sequence.
bool prefer_candidate(double cost_a, const Path& a, double cost_b, const Path& b);

struct PathSet {
  std::vector<Path> paths;  // canonical order, no duplicates

  std::size_t size() const { return paths.size(); }
  bool contains(const Path& p) const;
  void sort_canonical();
};

// All paths of length 1..E over the topology's bit-widths; |result| = sum_e B^e.
PathSet enumerate_paths(const NetworkTopology& topology);

// Keeps exactly the paths whose bit sequence is non-increasing.
PathSet filter_monotone(const PathSet& paths);

// Uniform sample without replacement of size `cap`, deterministic given seed.
// The maximal path and every single-block path are force-included so the
// exit-now option exists at every gate; if the forced paths alone exceed the
// cap they are all kept. Sets at or under the cap pass through unchanged.
PathSet sample_paths(const PathSet& paths, std::size_t cap, std::uint64_t seed);

// Normalized BitOPS cost: sum of flops_l * b_l over traversed blocks, divided
// by the cost of the full-depth max-bit path. Always in (0, 1].
double path_cost(const Path& path, const NetworkTopology& topology);

// Complete paths whose first |prefix| entries equal the prefix; includes the
// prefix itself when it is a complete path (the exit-now option). An empty
// prefix returns the whole set.
PathSet continuations(const Path& prefix, const PathSet& paths);

// Topology config file: JSON object with num_exits, block_flops, bit_widths,
// optional path_cap (default 50) and seed.
struct TopologyConfig {
  NetworkTopology topology;
  std::size_t path_cap = 50;
  std::uint64_t seed = 0;
};

TopologyConfig load_topology_config(const std::string& file);

// Stable hash of the topology, stored in model files to prevent routing with
// a model trained for a different network.
std::string topology_hash(const NetworkTopology& topology);

}  // namespace quee
