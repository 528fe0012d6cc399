#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "quee/dataset.hpp"
#include "quee/discretizer.hpp"
#include "quee/predictor.hpp"
#include "quee/rng.hpp"

using namespace quee;

namespace {

NetworkTopology two_block_topology() {
  NetworkTopology t;
  t.block_flops = {100, 100};
  t.bit_widths = {4, 8};
  return t;
}

std::vector<TrainingRow> random_rows(int count, int feature_dim, int encoding_dim,
                                     std::uint64_t seed, double target = -1.0) {
  Rng rng(seed);
  std::vector<TrainingRow> rows;
  for (int i = 0; i < count; ++i) {
    TrainingRow row;
    row.gate = 2;
    for (int j = 0; j < feature_dim; ++j) row.features.push_back(rng.next_double());
    for (int j = 0; j < encoding_dim; ++j) row.encoding.push_back(rng.next_double() * 8.0);
    row.target = target >= 0.0 ? target : rng.next_double();
    rows.push_back(std::move(row));
  }
  return rows;
}

// Every parameter of the net, for finite-difference probing.
std::vector<double*> parameter_pointers(GatePredictor& p) {
  std::vector<double*> out;
  for (double& w : p.embed_w) out.push_back(&w);
  for (double& w : p.w1) out.push_back(&w);
  for (double& w : p.b1) out.push_back(&w);
  for (double& w : p.w2) out.push_back(&w);
  out.push_back(&p.b2);
  return out;
}

double max_gradient_error(GatePredictor predictor, const std::vector<TrainingRow>& rows) {
  std::vector<double> analytic;
  loss_and_gradient(predictor, rows, analytic);
  const std::vector<double*> params = parameter_pointers(predictor);
  REQUIRE(params.size() == analytic.size());

  const double step = 1e-5;
  double worst = 0.0;
  std::vector<double> scratch;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + step;
    const double up = loss_and_gradient(predictor, rows, scratch);
    *params[i] = saved - step;
    const double down = loss_and_gradient(predictor, rows, scratch);
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(1e-6, std::abs(numeric) + std::abs(analytic[i]));
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("build_features layout and statistics") {
  SUBCASE("uniform vectors over 10 classes") {
    const std::vector<double> uniform(10, 0.1);
    const GateFeatures f = build_features(uniform, uniform, 10);
    REQUIRE(f.u.size() == 24);
    CHECK(f.u[20] == doctest::Approx(std::log(10.0)).epsilon(1e-12));  // entropy(current)
    CHECK(f.u[21] == doctest::Approx(std::log(10.0)).epsilon(1e-12));  // entropy(previous)
    CHECK(f.u[22] == 0.1);                                             // max(previous)
    CHECK(f.u[23] == 0.1);                                             // max(current)
  }

  SUBCASE("one-hot current vector") {
    const std::vector<double> onehot = {0, 0, 1};
    const std::vector<double> prev = {0.5, 0.25, 0.25};
    const GateFeatures f = build_features(onehot, prev, 3);
    REQUIRE(f.u.size() == 10);  // 2 * 3 + 4
    CHECK(f.u[6] == 0.0);       // entropy(current)
    CHECK(f.u[8] == 0.5);       // max(previous)
    CHECK(f.u[9] == 1.0);       // max(current)
    CHECK(std::equal(onehot.begin(), onehot.end(), f.u.begin()));
    CHECK(std::equal(prev.begin(), prev.end(), f.u.begin() + 3));
  }

  SUBCASE("missing previous vector duplicates the current one") {
    const std::vector<double> current = {0.7, 0.2, 0.1};
    const GateFeatures f = build_features(current, {}, 3);
    CHECK(std::equal(current.begin(), current.end(), f.u.begin() + 3));
    CHECK(f.u[6] == f.u[7]);
    CHECK(f.u[8] == f.u[9]);
  }

  SUBCASE("length mismatches are rejected") {
    const std::vector<double> v2 = {0.5, 0.5};
    const std::vector<double> v3 = {0.4, 0.3, 0.3};
    CHECK_THROWS_AS(build_features(v2, {}, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_features(v3, v2, 3), std::invalid_argument);
  }
}

TEST_CASE("encode_path") {
  CHECK(encode_path(Path{{8, 6}}, 4).p == std::vector<double>{8, 6, 0, 0, 2});
  CHECK(encode_path(Path{{4, 4}}, 2).p == std::vector<double>{4, 4, 2});
  CHECK(encode_path(Path{{8}}, 3).p == std::vector<double>{8, 0, 0, 1});
  CHECK_THROWS_AS(encode_path(Path{{8, 8}}, 1), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  const int feature_dim = 10;
  const int encoding_dim = 4;
  const std::vector<TrainingRow> rows = random_rows(6, feature_dim, encoding_dim, 2024);

  SUBCASE("sigmoid head, raw encoding") {
    GatePredictor p = make_gate_predictor(2, feature_dim, encoding_dim, 5, 0, true, 31);
    CHECK(max_gradient_error(p, rows) < 1e-4);
  }
  SUBCASE("linear head, raw encoding") {
    GatePredictor p = make_gate_predictor(2, feature_dim, encoding_dim, 5, 0, false, 32);
    CHECK(max_gradient_error(p, rows) < 1e-4);
  }
  SUBCASE("sigmoid head with path embedding") {
    GatePredictor p = make_gate_predictor(2, feature_dim, encoding_dim, 5, 3, true, 33);
    CHECK(max_gradient_error(p, rows) < 1e-4);
  }
}

TEST_CASE("predict_pe basics") {
  GatePredictor p = make_gate_predictor(2, 8, 3, 4, 0, true, 1);

  SUBCASE("zero weights produce 0.5 everywhere") {
    std::fill(p.w1.begin(), p.w1.end(), 0.0);
    std::fill(p.b1.begin(), p.b1.end(), 0.0);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    p.b2 = 0.0;
    GateFeatures f;
    f.u = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    PathEncoding e;
    e.p = {8, 0, 1};
    CHECK(predict_pe(p, f, e) == 0.5);
  }

  SUBCASE("outputs stay strictly inside (0,1) and calls are pure") {
    Rng rng(55);
    for (int i = 0; i < 50; ++i) {
      GateFeatures f;
      for (int j = 0; j < 8; ++j) f.u.push_back(rng.next_double() * 10 - 5);
      PathEncoding e;
      for (int j = 0; j < 3; ++j) e.p.push_back(rng.next_double() * 8);
      const double out = predict_pe(p, f, e);
      CHECK(out > 0.0);
      CHECK(out < 1.0);
      CHECK(predict_pe(p, f, e) == out);
    }
  }

  SUBCASE("dimension mismatches are rejected") {
    GateFeatures f;
    f.u = {0.1, 0.2};
    PathEncoding e;
    e.p = {8, 0, 1};
    CHECK_THROWS_AS(predict_pe(p, f, e), std::invalid_argument);
  }
}

TEST_CASE("training sanity") {
  TrainConfig cfg;
  cfg.hidden_dim = 8;
  cfg.batch_size = 64;

  SUBCASE("constant targets are matched within 0.02") {
    const std::vector<TrainingRow> rows = random_rows(1500, 10, 3, 7, 0.3);
    cfg.max_epochs = 400;
    cfg.patience = 50;
    cfg.weight_decay = 0.0;  // the sanity run measures pure convergence
    const GatePredictor p = train_gate(rows, {}, cfg, 99);
    for (const TrainingRow& row : rows) {
      CHECK(std::abs(p.predict(row.features, row.encoding) - 0.3) < 0.02);
    }
  }

  SUBCASE("a single repeated row is memorized") {
    std::vector<TrainingRow> rows = random_rows(1, 10, 3, 8, 0.7);
    for (int i = 0; i < 63; ++i) rows.push_back(rows[0]);
    cfg.max_epochs = 40;
    const double mid = mean_squared_error(train_gate(rows, {}, cfg, 5), rows);
    cfg.max_epochs = 400;
    cfg.patience = 100;
    const double final_mse = mean_squared_error(train_gate(rows, {}, cfg, 5), rows);
    CHECK(final_mse <= mid);
    CHECK(final_mse < 1e-4);
  }

  SUBCASE("returned weights never lose to the initialization") {
    const std::vector<TrainingRow> rows = random_rows(400, 10, 3, 9);
    const std::vector<TrainingRow> val = random_rows(100, 10, 3, 10);
    cfg.max_epochs = 0;  // returns the untouched initialization
    const double init_mse = mean_squared_error(train_gate(rows, val, cfg, 77), val);
    cfg.max_epochs = 30;
    const double trained_mse = mean_squared_error(train_gate(rows, val, cfg, 77), val);
    CHECK(trained_mse <= init_mse);
  }

  SUBCASE("empty rows are rejected") {
    CHECK_THROWS_AS(train_gate({}, {}, cfg, 1), std::invalid_argument);
  }

  SUBCASE("training is deterministic given the seed") {
    const std::vector<TrainingRow> rows = random_rows(300, 10, 3, 11);
    cfg.max_epochs = 5;
    const GatePredictor a = train_gate(rows, {}, cfg, 42);
    const GatePredictor b = train_gate(rows, {}, cfg, 42);
    CHECK(a.w1 == b.w1);
    CHECK(a.b1 == b.b1);
    CHECK(a.w2 == b.w2);
    CHECK(a.b2 == b.b2);
  }
}

TEST_CASE("build_training_rows matches a nested-loop oracle on a tiny instance") {
  const NetworkTopology topo = two_block_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));  // 5 paths
  REQUIRE(paths.size() == 5);

  SyntheticConfig cfg;
  cfg.num_samples = 3;
  cfg.num_classes = 4;
  cfg.train_fraction = 1.0;
  cfg.validation_fraction = 0.0;
  cfg.test_fraction = 0.0;
  cfg.seed = 13;
  const SplitDataset d = generate_synthetic(cfg, topo, paths);
  REQUIRE(d.train.size() == 3);

  const DiscretizerModel disc = fit_discretizer(d.train, paths, 1, 5);
  const auto rows = build_training_rows(d.train, paths, disc, topo, 3, /*prefixes=*/2);
  REQUIRE(rows.size() == 1);  // only gate 2

  // Oracle: for every record and both depth-1 prefixes, one row per
  // continuation, features from the prefix vector alone.
  struct ExpectedRow {
    std::vector<double> features;
    std::vector<double> encoding;
    double target;
    bool operator<(const ExpectedRow& o) const {
      if (features != o.features) return features < o.features;
      if (encoding != o.encoding) return encoding < o.encoding;
      return target < o.target;
    }
    bool operator==(const ExpectedRow& o) const {
      return features == o.features && encoding == o.encoding && target == o.target;
    }
  };
  std::multiset<ExpectedRow> expected;
  for (const SampleRecord& r : d.train) {
    for (const Path& prefix : {Path{{8}}, Path{{4}}}) {
      const std::vector<double>& current = r.probs.at(prefix.key());
      const GateFeatures f = build_features(current, {}, 4);
      for (const Path& cand : continuations(prefix, paths).paths) {
        expected.insert({f.u, encode_path(cand, 2).p,
                         assign_target(disc, cand, r.probs.at(cand.key()))});
      }
    }
  }
  std::multiset<ExpectedRow> actual;
  for (const TrainingRow& row : rows[0]) {
    CHECK(row.gate == 2);
    actual.insert({row.features, row.encoding, row.target});
  }
  CHECK(actual == expected);
  CHECK(rows[0].size() == 3 * 5);  // |continuations([8])| + |continuations([4])| = 5
}

TEST_CASE("build_training_rows respects the per-gate prefix cap") {
  const NetworkTopology topo = two_block_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  SyntheticConfig cfg;
  cfg.num_samples = 20;
  cfg.train_fraction = 1.0;
  cfg.validation_fraction = 0.0;
  cfg.test_fraction = 0.0;
  cfg.seed = 19;
  const SplitDataset d = generate_synthetic(cfg, topo, paths);
  const DiscretizerModel disc = fit_discretizer(d.train, paths, 1, 5);

  const auto rows = build_training_rows(d.train, paths, disc, topo, 3, /*prefixes=*/1);
  // With one prefix per sample each record contributes |continuations(prefix)|
  // rows: 3 for prefix [8], 2 for prefix [4].
  CHECK(rows[0].size() >= d.train.size() * 2);
  CHECK(rows[0].size() <= d.train.size() * 3);

  // Determinism: same seed, same rows.
  const auto again = build_training_rows(d.train, paths, disc, topo, 3, 1);
  REQUIRE(again[0].size() == rows[0].size());
  for (std::size_t r = 0; r < rows[0].size(); ++r) {
    CHECK(again[0][r].features == rows[0][r].features);
    CHECK(again[0][r].encoding == rows[0][r].encoding);
    CHECK(again[0][r].target == rows[0][r].target);
  }
}

TEST_CASE("K=1 discretizer collapses rows to one target per candidate path") {
  const NetworkTopology topo = two_block_topology();
  const PathSet paths = filter_monotone(enumerate_paths(topo));
  SyntheticConfig cfg;
  cfg.num_samples = 30;
  cfg.train_fraction = 1.0;
  cfg.validation_fraction = 0.0;
  cfg.test_fraction = 0.0;
  cfg.seed = 23;
  const SplitDataset d = generate_synthetic(cfg, topo, paths);
  const DiscretizerModel disc = fit_discretizer(d.train, paths, 1, 5);

  const auto rows = build_training_rows(d.train, paths, disc, topo, 3, 2);
  std::map<std::vector<double>, std::set<double>> targets_by_encoding;
  for (const TrainingRow& row : rows[0]) {
    targets_by_encoding[row.encoding].insert(row.target);
  }
  for (const auto& [enc, targets] : targets_by_encoding) CHECK(targets.size() == 1);
}
