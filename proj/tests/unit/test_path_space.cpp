#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "quee/errors.hpp"
#include "quee/path_space.hpp"
#include "quee/rng.hpp"

using namespace quee;

namespace {

NetworkTopology make_topology(std::vector<double> flops, std::vector<int> bits) {
  NetworkTopology t;
  t.block_flops = std::move(flops);
  t.bit_widths = std::move(bits);
  return t;
}

// Independent enumeration: odometer over base-B digits per length.
std::set<std::vector<int>> brute_force_paths(const NetworkTopology& topo) {
  std::set<std::vector<int>> out;
  const int levels = topo.num_levels();
  for (int e = 1; e <= topo.num_exits(); ++e) {
    std::vector<int> digits(e, 0);
    while (true) {
      std::vector<int> path(e);
      for (int i = 0; i < e; ++i) path[i] = topo.bit_widths[digits[i]];
      out.insert(path);
      int pos = e - 1;
      while (pos >= 0 && ++digits[pos] == levels) digits[pos--] = 0;
      if (pos < 0) break;
    }
  }
  return out;
}

bool non_increasing(const std::vector<int>& bits) {
  for (std::size_t i = 1; i < bits.size(); ++i) {
    if (bits[i] > bits[i - 1]) return false;
  }
  return true;
}

std::set<std::vector<int>> as_set(const PathSet& paths) {
  std::set<std::vector<int>> out;
  for (const Path& p : paths.paths) out.insert(p.bits);
  return out;
}

}  // namespace

TEST_CASE("enumerate_paths matches the spec examples") {
  const PathSet two = enumerate_paths(make_topology({100, 100}, {4, 8}));
  CHECK(two.size() == 6);
  CHECK(as_set(two) == std::set<std::vector<int>>{{4}, {8}, {4, 4}, {4, 8}, {8, 4}, {8, 8}});

  const PathSet one = enumerate_paths(make_topology({100}, {8}));
  REQUIRE(one.size() == 1);
  CHECK(one.paths[0].bits == std::vector<int>{8});

  CHECK(enumerate_paths(make_topology({1, 1, 1}, {4, 8})).size() == 14);
}

TEST_CASE("enumerate_paths count and content vs brute force for all E <= 5, B <= 4") {
  const std::vector<int> all_bits = {2, 4, 6, 8};
  for (int e = 1; e <= 5; ++e) {
    for (int b = 1; b <= 4; ++b) {
      NetworkTopology topo =
          make_topology(std::vector<double>(e, 50.0),
                        std::vector<int>(all_bits.begin(), all_bits.begin() + b));
      const PathSet paths = enumerate_paths(topo);
      std::size_t expected = 0;
      std::size_t power = 1;
      for (int depth = 1; depth <= e; ++depth) {
        power *= static_cast<std::size_t>(b);
        expected += power;
      }
      CHECK(paths.size() == expected);
      CHECK(as_set(paths) == brute_force_paths(topo));
    }
  }
}

TEST_CASE("canonical order is by length then lexicographically descending bits") {
  const PathSet paths = enumerate_paths(make_topology({1, 1}, {4, 8}));
  std::vector<std::vector<int>> expected = {{8}, {4}, {8, 8}, {8, 4}, {4, 8}, {4, 4}};
  REQUIRE(paths.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(paths.paths[i].bits == expected[i]);
}

TEST_CASE("filter_monotone keeps exactly the non-increasing paths") {
  const NetworkTopology topo = make_topology({1, 1}, {4, 8});
  const PathSet filtered = filter_monotone(enumerate_paths(topo));
  CHECK(as_set(filtered) ==
        std::set<std::vector<int>>{{4}, {8}, {4, 4}, {8, 4}, {8, 8}});

  SUBCASE("single-block paths are unchanged") {
    PathSet singles;
    singles.paths = {Path{{8}}, Path{{4}}};
    CHECK(as_set(filter_monotone(singles)) == as_set(singles));
  }

  SUBCASE("counts for E=3, bits {4,8}: 14 -> 9") {
    const PathSet deep = filter_monotone(enumerate_paths(make_topology({1, 1, 1}, {4, 8})));
    CHECK(deep.size() == 9);
  }

  SUBCASE("idempotent and verified against a direct check") {
    for (int e = 1; e <= 4; ++e) {
      const PathSet all = enumerate_paths(make_topology(std::vector<double>(e, 1.0), {2, 4, 8}));
      const PathSet once = filter_monotone(all);
      for (const Path& p : once.paths) CHECK(non_increasing(p.bits));
      std::size_t direct = 0;
      for (const Path& p : all.paths) {
        if (non_increasing(p.bits)) ++direct;
      }
      CHECK(once.size() == direct);
      CHECK(as_set(filter_monotone(once)) == as_set(once));
    }
  }
}

TEST_CASE("sample_paths") {
  const NetworkTopology topo = make_topology({1, 1, 1}, {4, 8});
  const PathSet all = enumerate_paths(topo);  // 14 paths

  SUBCASE("under the cap the set passes through unchanged") {
    const PathSet monotone = filter_monotone(all);  // 9 paths
    const PathSet sampled = sample_paths(monotone, 50, 123);
    CHECK(sampled.paths == monotone.paths);
  }

  SUBCASE("cap smaller than the set: distinct, reproducible, forced members present") {
    const PathSet s1 = sample_paths(all, 5, 99);
    const PathSet s2 = sample_paths(all, 5, 99);
    CHECK(s1.paths == s2.paths);
    CHECK(s1.size() == 5);
    CHECK(as_set(s1).size() == 5);
    // Every single-block path and the full-precision path survive sampling.
    CHECK(s1.contains(Path{{4}}));
    CHECK(s1.contains(Path{{8}}));
    CHECK(s1.contains(Path{{8, 8, 8}}));

    const PathSet other = sample_paths(all, 5, 100);
    CHECK(as_set(other).size() == 5);
  }

  SUBCASE("cap zero is rejected") {
    CHECK_THROWS_AS(sample_paths(all, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("path_cost hand-checked values are exact") {
  const NetworkTopology topo = make_topology({100, 300}, {4, 8});
  CHECK(path_cost(Path{{8}}, topo) == 0.25);
  CHECK(path_cost(Path{{8, 4}}, topo) == 0.625);
  CHECK(path_cost(Path{{8, 8}}, topo) == 1.0);
}

TEST_CASE("path_cost is strictly monotone under extension and bit raises") {
  Rng rng(20240803);
  for (int trial = 0; trial < 1000; ++trial) {
    const int num_exits = 2 + static_cast<int>(rng.next_index(3));
    std::vector<double> flops;
    for (int i = 0; i < num_exits; ++i) flops.push_back(1.0 + 99.0 * rng.next_double());
    const NetworkTopology topo = make_topology(std::move(flops), {2, 4, 8});

    std::vector<int> bits;
    const int depth = 1 + static_cast<int>(rng.next_index(num_exits - 1));
    for (int i = 0; i < depth; ++i) {
      bits.push_back(topo.bit_widths[rng.next_index(topo.bit_widths.size())]);
    }
    const Path path{bits};
    const double base = path_cost(path, topo);

    Path extended = path;
    extended.bits.push_back(topo.bit_widths[rng.next_index(topo.bit_widths.size())]);
    CHECK(path_cost(extended, topo) > base);

    const std::size_t pos = rng.next_index(bits.size());
    if (bits[pos] < topo.max_bits()) {
      Path raised = path;
      raised.bits[pos] = topo.bit_widths[topo.num_levels() - 1];
      if (raised.bits[pos] > bits[pos]) CHECK(path_cost(raised, topo) > base);
    }

    Path full;
    full.bits.assign(num_exits, topo.max_bits());
    CHECK(path_cost(full, topo) == 1.0);
  }
}

TEST_CASE("continuations") {
  const NetworkTopology topo = make_topology({1, 1}, {4, 8});
  const PathSet monotone = filter_monotone(enumerate_paths(topo));  // 5 paths

  CHECK(as_set(continuations(Path{{8}}, monotone)) ==
        std::set<std::vector<int>>{{8}, {8, 4}, {8, 8}});
  CHECK(as_set(continuations(Path{{4}}, monotone)) ==
        std::set<std::vector<int>>{{4}, {4, 4}});
  CHECK(continuations(Path{}, monotone).paths == monotone.paths);

  SUBCASE("one-step extensions partition the continuations") {
    const NetworkTopology deep = make_topology({1, 1, 1}, {4, 8});
    const PathSet paths = filter_monotone(enumerate_paths(deep));
    const Path prefix{{8}};
    const PathSet all = continuations(prefix, paths);

    std::set<std::vector<int>> unioned;
    if (all.contains(prefix)) unioned.insert(prefix.bits);
    std::size_t total = all.contains(prefix) ? 1 : 0;
    for (int b : deep.bit_widths) {
      Path step = prefix;
      step.bits.push_back(b);
      const PathSet branch = continuations(step, paths);
      for (const Path& p : branch.paths) {
        const bool fresh = unioned.insert(p.bits).second;
        CHECK(fresh);  // disjoint
      }
      total += branch.size();
    }
    CHECK(total == all.size());
    CHECK(unioned == as_set(all));
  }
}

TEST_CASE("prefer_candidate tie-break: cost first, then greater bits") {
  CHECK(prefer_candidate(0.2, Path{{4}}, 0.5, Path{{8, 8}}));
  CHECK_FALSE(prefer_candidate(0.5, Path{{8, 8}}, 0.2, Path{{4}}));
  CHECK(prefer_candidate(0.5, Path{{8, 4}}, 0.5, Path{{4, 8}}));
  CHECK_FALSE(prefer_candidate(0.5, Path{{4, 8}}, 0.5, Path{{8, 4}}));
}

TEST_CASE("path keys round-trip") {
  const Path p{{8, 6, 6}};
  CHECK(p.key() == "8-6-6");
  CHECK(Path::from_key("8-6-6") == p);
  CHECK_THROWS_AS(Path::from_key(""), std::invalid_argument);
}

TEST_CASE("topology validation") {
  CHECK_THROWS_AS(make_topology({}, {8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_topology({1.0}, {}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_topology({-1.0}, {8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make_topology({1.0}, {8, 4}).validate(), std::invalid_argument);
  CHECK_NOTHROW(make_topology({1.0, 2.0}, {4, 8}).validate());
}

TEST_CASE("topology config file") {
  const std::string file = "topo_test.json";
  {
    std::ofstream out(file);
    out << R"({"num_exits": 2, "block_flops": [100, 300], "bit_widths": [4, 8],)"
        << R"( "path_cap": 10, "seed": 42})";
  }
  const TopologyConfig cfg = load_topology_config(file);
  CHECK(cfg.topology.num_exits() == 2);
  CHECK(cfg.topology.bit_widths == std::vector<int>{4, 8});
  CHECK(cfg.path_cap == 10);
  CHECK(cfg.seed == 42);

  {
    std::ofstream out(file);
    out << R"({"num_exits": 3, "block_flops": [100, 300], "bit_widths": [4, 8]})";
  }
  CHECK_THROWS_AS(load_topology_config(file), SchemaError);
  CHECK_THROWS_AS(load_topology_config("does_not_exist.json"), SchemaError);
  std::remove(file.c_str());
}

TEST_CASE("topology hash distinguishes topologies") {
  const NetworkTopology a = make_topology({100, 300}, {4, 8});
  const NetworkTopology b = make_topology({100, 300}, {4, 8});
  const NetworkTopology c = make_topology({100, 301}, {4, 8});
  CHECK(topology_hash(a) == topology_hash(b));
  CHECK(topology_hash(a) != topology_hash(c));
}
