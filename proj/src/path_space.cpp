#include "quee/path_space.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "quee/errors.hpp"
#include "quee/rng.hpp"

namespace quee {

bool NetworkTopology::has_bits(int b) const {
  return std::find(bit_widths.begin(), bit_widths.end(), b) != bit_widths.end();
}

void NetworkTopology::validate() const {
  if (block_flops.empty()) {
    throw std::invalid_argument("topology: at least one block required");
  }
  for (double f : block_flops) {
    if (!(f > 0.0)) throw std::invalid_argument("topology: block_flops must be positive");
  }
  if (bit_widths.empty()) {
    throw std::invalid_argument("topology: at least one bit-width required");
  }
  for (std::size_t i = 0; i < bit_widths.size(); ++i) {
    if (bit_widths[i] <= 0) throw std::invalid_argument("topology: bit_widths must be positive");
    if (i > 0 && bit_widths[i] <= bit_widths[i - 1]) {
      throw std::invalid_argument("topology: bit_widths must be strictly increasing");
    }
  }
}

double Path::mean_bits() const {
  if (bits.empty()) return 0.0;
  return std::accumulate(bits.begin(), bits.end(), 0.0) / static_cast<double>(bits.size());
}

Path Path::prefix(int length) const {
  Path p;
  p.bits.assign(bits.begin(), bits.begin() + length);
  return p;
}

bool Path::is_prefix_of(const Path& other) const {
  if (bits.size() > other.bits.size()) return false;
  return std::equal(bits.begin(), bits.end(), other.bits.begin());
}

std::string Path::key() const {
  std::string out;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (i > 0) out += '-';
    out += std::to_string(bits[i]);
  }
  return out;
}

Path Path::from_key(const std::string& key) {
  Path p;
  std::stringstream ss(key);
  std::string token;
  while (std::getline(ss, token, '-')) {
    if (token.empty()) throw std::invalid_argument("path key: empty segment in '" + key + "'");
    p.bits.push_back(std::stoi(token));
  }
  if (p.bits.empty()) throw std::invalid_argument("path key: no segments in '" + key + "'");
  return p;
}

bool canonical_less(const Path& a, const Path& b) {
  if (a.bits.size() != b.bits.size()) return a.bits.size() < b.bits.size();
  return std::lexicographical_compare(b.bits.begin(), b.bits.end(), a.bits.begin(), a.bits.end());
}

bool prefer_candidate(double cost_a, const Path& a, double cost_b, const Path& b) {
  if (cost_a != cost_b) return cost_a < cost_b;
  return std::lexicographical_compare(b.bits.begin(), b.bits.end(), a.bits.begin(), a.bits.end());
}

bool PathSet::contains(const Path& p) const {
  return std::find(paths.begin(), paths.end(), p) != paths.end();
}

void PathSet::sort_canonical() {
  std::sort(paths.begin(), paths.end(), canonical_less);
}

PathSet enumerate_paths(const NetworkTopology& topology) {
  topology.validate();
  const int num_exits = topology.num_exits();
  PathSet out;
  std::vector<Path> frontier;
  for (int depth = 1; depth <= num_exits; ++depth) {
    std::vector<Path> next;
    if (depth == 1) {
      for (int b : topology.bit_widths) next.push_back(Path{{b}});
    } else {
      for (const Path& p : frontier) {
        for (int b : topology.bit_widths) {
          Path q = p;
          q.bits.push_back(b);
          next.push_back(std::move(q));
        }
      }
    }
    out.paths.insert(out.paths.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  out.sort_canonical();
  return out;
}

PathSet filter_monotone(const PathSet& paths) {
  PathSet out;
  for (const Path& p : paths.paths) {
    if (std::is_sorted(p.bits.rbegin(), p.bits.rend())) {
      out.paths.push_back(p);
    }
  }
  return out;
}

PathSet sample_paths(const PathSet& paths, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw std::invalid_argument("sample_paths: cap must be >= 1");
  if (paths.size() <= cap) return paths;

  // Forced: every depth-1 path plus the maximal path (deepest, then
  // lexicographically greatest bits - the full-precision path in a monotone
  // set).
  auto outranks = [](const Path& a, const Path& b) {
    if (a.depth() != b.depth()) return a.depth() > b.depth();
    return std::lexicographical_compare(b.bits.begin(), b.bits.end(), a.bits.begin(),
                                        a.bits.end());
  };
  std::vector<std::size_t> forced;
  std::vector<std::size_t> rest;
  std::size_t max_idx = 0;
  for (std::size_t i = 0; i < paths.paths.size(); ++i) {
    if (outranks(paths.paths[i], paths.paths[max_idx])) max_idx = i;
  }
  for (std::size_t i = 0; i < paths.paths.size(); ++i) {
    if (paths.paths[i].depth() == 1 || i == max_idx) {
      forced.push_back(i);
    } else {
      rest.push_back(i);
    }
  }

  PathSet out;
  for (std::size_t i : forced) out.paths.push_back(paths.paths[i]);
  if (cap > forced.size()) {
    Rng rng(seed);
    std::size_t want = cap - forced.size();
    // Partial Fisher-Yates: draw `want` indices without replacement.
    for (std::size_t i = 0; i < want; ++i) {
      std::swap(rest[i], rest[i + rng.next_index(rest.size() - i)]);
      out.paths.push_back(paths.paths[rest[i]]);
    }
  }
  out.sort_canonical();
  return out;
}

double path_cost(const Path& path, const NetworkTopology& topology) {
  if (path.empty() || path.depth() > topology.num_exits()) {
    throw std::invalid_argument("path_cost: path depth out of range for topology");
  }
  double numer = 0.0;
  for (int l = 0; l < path.depth(); ++l) {
    if (!topology.has_bits(path.bits[l])) {
      throw std::invalid_argument("path_cost: bit-width " + std::to_string(path.bits[l]) +
                                  " not in topology");
    }
    numer += topology.block_flops[l] * static_cast<double>(path.bits[l]);
  }
  double denom = 0.0;
  for (int l = 0; l < topology.num_exits(); ++l) {
    denom += topology.block_flops[l] * static_cast<double>(topology.max_bits());
  }
  return numer / denom;
}

PathSet continuations(const Path& prefix, const PathSet& paths) {
  PathSet out;
  for (const Path& p : paths.paths) {
    if (prefix.is_prefix_of(p)) out.paths.push_back(p);
  }
  return out;
}

TopologyConfig load_topology_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("topology config: cannot open " + file);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("topology config: " + std::string(e.what()));
  }
  TopologyConfig cfg;
  try {
    const int num_exits = doc.at("num_exits").get<int>();
    cfg.topology.block_flops = doc.at("block_flops").get<std::vector<double>>();
    cfg.topology.bit_widths = doc.at("bit_widths").get<std::vector<int>>();
    if (num_exits != cfg.topology.num_exits()) {
      throw SchemaError("topology config: num_exits does not match block_flops length");
    }
    cfg.path_cap = doc.value("path_cap", std::size_t{50});
    cfg.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("topology config: " + std::string(e.what()));
  }
  cfg.topology.validate();
  if (cfg.path_cap == 0) throw SchemaError("topology config: path_cap must be >= 1");
  return cfg;
}

std::string topology_hash(const NetworkTopology& topology) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  mix(static_cast<std::uint64_t>(topology.num_exits()));
  for (double f : topology.block_flops) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(f));
    std::memcpy(&bits, &f, sizeof(bits));
    mix(bits);
  }
  for (int b : topology.bit_widths) mix(static_cast<std::uint64_t>(b));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace quee
