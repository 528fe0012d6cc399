#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "quee/dataset.hpp"
#include "quee/errors.hpp"

using namespace quee;

namespace {

NetworkTopology default_topology() {
  NetworkTopology t;
  t.block_flops = {100, 100, 100};
  t.bit_widths = {4, 8};
  return t;
}

SyntheticConfig small_config(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.num_samples = 2000;
  cfg.seed = seed;
  return cfg;
}

bool records_equal(const std::vector<SampleRecord>& a, const std::vector<SampleRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].label != b[i].label) return false;
    if (a[i].probs.size() != b[i].probs.size()) return false;
    for (const auto& [key, vec] : a[i].probs) {
      auto it = b[i].probs.find(key);
      if (it == b[i].probs.end() || it->second != vec) return false;  // bit-exact
    }
  }
  return true;
}

std::vector<SampleRecord> all_records(const SplitDataset& d) {
  std::vector<SampleRecord> out = d.train;
  out.insert(out.end(), d.validation.begin(), d.validation.end());
  out.insert(out.end(), d.test.begin(), d.test.end());
  return out;
}

SampleRecord one_path_record(const std::string& id, int label, std::vector<double> probs) {
  SampleRecord r;
  r.id = id;
  r.label = label;
  r.probs.emplace("8", std::move(probs));
  return r;
}

}  // namespace

TEST_CASE("generate_synthetic is deterministic and splits by the fractions") {
  const NetworkTopology topo = default_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  const SplitDataset a = generate_synthetic(small_config(11), topo, paths);
  const SplitDataset b = generate_synthetic(small_config(11), topo, paths);

  CHECK(a.train.size() == 1000);
  CHECK(a.validation.size() == 600);
  CHECK(a.test.size() == 400);
  CHECK(records_equal(a.train, b.train));
  CHECK(records_equal(a.validation, b.validation));
  CHECK(records_equal(a.test, b.test));

  const SplitDataset c = generate_synthetic(small_config(12), topo, paths);
  CHECK_FALSE(records_equal(a.train, c.train));
}

TEST_CASE("generated vectors are valid probability vectors") {
  const NetworkTopology topo = default_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  const SplitDataset d = generate_synthetic(small_config(3), topo, paths);
  for (const SampleRecord& r : all_records(d)) {
    for (const auto& [key, v] : r.probs) {
      double sum = 0.0;
      for (double p : v) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("save/load round-trips bit-exactly") {
  const NetworkTopology topo = default_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  SyntheticConfig cfg = small_config(5);
  cfg.num_samples = 300;
  const SplitDataset d = generate_synthetic(cfg, topo, paths);

  const std::string file = "dataset_roundtrip.ndjson";
  save_dataset(d, file);
  const SplitDataset loaded = load_dataset(file, topo, paths);
  CHECK(loaded.num_classes == d.num_classes);
  CHECK(loaded.path_keys == d.path_keys);
  CHECK(records_equal(loaded.train, d.train));
  CHECK(records_equal(loaded.validation, d.validation));
  CHECK(records_equal(loaded.test, d.test));

  // And the file itself is reproducible.
  const std::string file2 = "dataset_roundtrip2.ndjson";
  save_dataset(loaded, file2);
  std::ifstream f1(file), f2(file2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(file.c_str());
  std::remove(file2.c_str());
}

TEST_CASE("loader rejects malformed records by id") {
  const NetworkTopology topo = default_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  const std::string file = "dataset_bad.ndjson";

  const std::string header =
      R"({"format":"quee.dataset","version":1,"num_classes":2,"path_keys":["8","4","8-8","8-4","4-4","8-8-8","8-8-4","8-4-4","4-4-4"]})";
  const std::string good_probs =
      R"("8":[0.6,0.4],"4":[0.6,0.4],"8-8":[0.6,0.4],"8-4":[0.6,0.4],"4-4":[0.6,0.4],)"
      R"("8-8-8":[0.6,0.4],"8-8-4":[0.6,0.4],"8-4-4":[0.6,0.4],"4-4-4":[0.6,0.4])";

  SUBCASE("missing path key") {
    std::ofstream out(file);
    out << header << '\n';
    out << R"({"id":"r7","split":"train","label":0,"probs":{"8":[0.6,0.4]}})" << '\n';
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(file, topo, paths),
                         doctest::Contains("r7"), SchemaError);
  }

  SUBCASE("vector that does not sum to one") {
    std::ofstream out(file);
    out << header << '\n';
    std::string probs = good_probs;
    const std::string from = R"("8":[0.6,0.4])";
    probs.replace(probs.find(from), from.size(), R"("8":[0.5,0.3])");
    out << R"({"id":"r9","split":"train","label":0,"probs":{)" << probs << "}}" << '\n';
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(file, topo, paths),
                         doctest::Contains("r9"), SchemaError);
  }

  SUBCASE("unknown class index") {
    std::ofstream out(file);
    out << header << '\n';
    out << R"({"id":"r3","split":"train","label":5,"probs":{)" << good_probs << "}}" << '\n';
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(file, topo, paths),
                         doctest::Contains("r3"), SchemaError);
  }

  SUBCASE("version mismatch is rejected") {
    std::ofstream out(file);
    out << R"({"format":"quee.dataset","version":2,"num_classes":2,"path_keys":["8"]})" << '\n';
    out.close();
    CHECK_THROWS_AS(load_dataset(file, topo, paths), SchemaError);
  }

  SUBCASE("well-formed file loads") {
    std::ofstream out(file);
    out << header << '\n';
    for (int i = 0; i < 3; ++i) {
      out << R"({"id":"ok)" << i << R"(","split":"train","label":0,"probs":{)" << good_probs
          << "}}" << '\n';
    }
    out.close();
    CHECK(load_dataset(file, topo, paths).train.size() == 3);
  }

  std::remove(file.c_str());
}

TEST_CASE("empirical_accuracy") {
  SUBCASE("correctness pattern right/wrong/right/right gives 0.75") {
    std::vector<SampleRecord> records;
    records.push_back(one_path_record("a", 0, {0.9, 0.1}));
    records.push_back(one_path_record("b", 0, {0.2, 0.8}));
    records.push_back(one_path_record("c", 1, {0.3, 0.7}));
    records.push_back(one_path_record("d", 1, {0.1, 0.9}));
    CHECK(empirical_accuracy(records, Path{{8}}) == 0.75);
  }

  SUBCASE("one-hot vectors at the label give 1.0") {
    std::vector<SampleRecord> records;
    records.push_back(one_path_record("a", 1, {0.0, 1.0}));
    records.push_back(one_path_record("b", 0, {1.0, 0.0}));
    CHECK(empirical_accuracy(records, Path{{8}}) == 1.0);
  }

  SUBCASE("argmax ties break toward the lowest class index") {
    std::vector<SampleRecord> records;
    records.push_back(one_path_record("a", 0, {0.5, 0.5}));
    records.push_back(one_path_record("b", 1, {0.5, 0.5}));
    CHECK(empirical_accuracy(records, Path{{8}}) == 0.5);
  }

  SUBCASE("empty records are rejected") {
    std::vector<SampleRecord> records;
    CHECK_THROWS_AS(empirical_accuracy(records, Path{{8}}), std::invalid_argument);
  }

  SUBCASE("matches a direct recount on synthetic data") {
    const NetworkTopology topo = default_topology();
    const PathSet paths = filter_monotone(enumerate_paths(topo));
    const SplitDataset d = generate_synthetic(small_config(21), topo, paths);
    for (const Path& path : paths.paths) {
      std::size_t correct = 0;
      for (const SampleRecord& r : d.test) {
        const std::vector<double>& v = r.probs.at(path.key());
        int best = 0;
        for (int c = 1; c < d.num_classes; ++c) {
          if (v[c] > v[best]) best = c;
        }
        if (best == r.label) ++correct;
      }
      CHECK(empirical_accuracy(d.test, path) ==
            static_cast<double>(correct) / static_cast<double>(d.test.size()));
    }
  }
}

TEST_CASE("synthetic skill shaping") {
  const NetworkTopology topo = default_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));

  SUBCASE("huge exit gain saturates deep-path accuracy") {
    SyntheticConfig cfg = small_config(31);
    cfg.num_samples = 600;
    cfg.exit_gain = 50.0;
    const SplitDataset d = generate_synthetic(cfg, topo, paths);
    const auto records = all_records(d);
    CHECK(empirical_accuracy(records, Path{{8, 8, 8}}) >= 0.995);
  }

  SUBCASE("zero bit gain makes equal-depth paths agree within binomial noise") {
    SyntheticConfig cfg = small_config(32);
    cfg.bit_gain = 0.0;
    const SplitDataset d = generate_synthetic(cfg, topo, paths);
    const auto records = all_records(d);
    const double tol = 3.0 * std::sqrt(0.5 / static_cast<double>(records.size()));
    CHECK(std::abs(empirical_accuracy(records, Path{{8}}) -
                   empirical_accuracy(records, Path{{4}})) <= tol);
    CHECK(std::abs(empirical_accuracy(records, Path{{8, 8}}) -
                   empirical_accuracy(records, Path{{4, 4}})) <= tol);
  }

  SUBCASE("accuracy is monotone in depth and bits up to binomial noise") {
    SyntheticConfig cfg = small_config(33);
    cfg.num_samples = 6000;
    const SplitDataset d = generate_synthetic(cfg, topo, paths);
    const auto records = all_records(d);
    const double tol = 3.0 * std::sqrt(0.5 / static_cast<double>(records.size()));

    const double a8 = empirical_accuracy(records, Path{{8}});
    const double a88 = empirical_accuracy(records, Path{{8, 8}});
    const double a888 = empirical_accuracy(records, Path{{8, 8, 8}});
    CHECK(a88 >= a8 - tol);
    CHECK(a888 >= a88 - tol);

    const double a44 = empirical_accuracy(records, Path{{4, 4}});
    const double a84 = empirical_accuracy(records, Path{{8, 4}});
    CHECK(a84 >= a44 - tol);
    CHECK(a88 >= a84 - tol);
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  cfg.train_fraction = 0.4;  // fractions no longer sum to 1
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SyntheticConfig{};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(SyntheticConfig{}.validate());
}
