#include "quee/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "quee/errors.hpp"
#include "quee/rng.hpp"

namespace quee {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Parameters flattened as embed_w || w1 || b1 || w2 || b2.
std::vector<double> pack_parameters(const GatePredictor& p) {
  std::vector<double> flat;
  flat.reserve(p.parameter_count());
  flat.insert(flat.end(), p.embed_w.begin(), p.embed_w.end());
  flat.insert(flat.end(), p.w1.begin(), p.w1.end());
  flat.insert(flat.end(), p.b1.begin(), p.b1.end());
  flat.insert(flat.end(), p.w2.begin(), p.w2.end());
  flat.push_back(p.b2);
  return flat;
}

void unpack_parameters(std::span<const double> flat, GatePredictor& p) {
  std::size_t off = 0;
  std::copy_n(flat.begin() + off, p.embed_w.size(), p.embed_w.begin());
  off += p.embed_w.size();
  std::copy_n(flat.begin() + off, p.w1.size(), p.w1.begin());
  off += p.w1.size();
  std::copy_n(flat.begin() + off, p.b1.size(), p.b1.begin());
  off += p.b1.size();
  std::copy_n(flat.begin() + off, p.w2.size(), p.w2.begin());
  off += p.w2.size();
  p.b2 = flat[off];
}

struct ForwardScratch {
  std::vector<double> input;
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
};

double forward(const GatePredictor& p, std::span<const double> features,
               std::span<const double> encoding, ForwardScratch& s) {
  const int in_dim = p.input_dim();
  s.input.assign(in_dim, 0.0);
  std::copy(features.begin(), features.end(), s.input.begin());
  if (p.path_embedding_dim > 0) {
    for (int a = 0; a < p.path_embedding_dim; ++a) {
      double acc = 0.0;
      for (int b = 0; b < p.encoding_dim; ++b) {
        acc += p.embed_w[a * p.encoding_dim + b] * encoding[b];
      }
      s.input[p.feature_dim + a] = acc;
    }
  } else {
    std::copy(encoding.begin(), encoding.end(), s.input.begin() + p.feature_dim);
  }

  s.hidden_pre.assign(p.hidden_dim, 0.0);
  s.hidden.assign(p.hidden_dim, 0.0);
  for (int i = 0; i < p.hidden_dim; ++i) {
    double acc = p.b1[i];
    const double* row = &p.w1[static_cast<std::size_t>(i) * in_dim];
    for (int j = 0; j < in_dim; ++j) acc += row[j] * s.input[j];
    s.hidden_pre[i] = acc;
    s.hidden[i] = acc > 0.0 ? acc : 0.0;
  }
  double z = p.b2;
  for (int i = 0; i < p.hidden_dim; ++i) z += p.w2[i] * s.hidden[i];
  return p.sigmoid_output ? sigmoid(z) : z;
}

double batch_loss_and_gradient(const GatePredictor& p, std::span<const TrainingRow> rows,
                               std::span<const std::size_t> indices,
                               std::vector<double>& gradient) {
  const int in_dim = p.input_dim();
  gradient.assign(p.parameter_count(), 0.0);
  const std::size_t emb_off = 0;
  const std::size_t w1_off = emb_off + p.embed_w.size();
  const std::size_t b1_off = w1_off + p.w1.size();
  const std::size_t w2_off = b1_off + p.b1.size();
  const std::size_t b2_off = w2_off + p.w2.size();

  ForwardScratch s;
  std::vector<double> dinput(in_dim);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(indices.size());

  for (std::size_t idx : indices) {
    const TrainingRow& row = rows[idx];
    const double out = forward(p, row.features, row.encoding, s);
    const double err = out - row.target;
    loss += err * err * inv_n;

    double dz = 2.0 * err * inv_n;
    if (p.sigmoid_output) dz *= out * (1.0 - out);

    gradient[b2_off] += dz;
    std::fill(dinput.begin(), dinput.end(), 0.0);
    for (int i = 0; i < p.hidden_dim; ++i) {
      gradient[w2_off + i] += dz * s.hidden[i];
      if (s.hidden_pre[i] <= 0.0) continue;
      const double dh = dz * p.w2[i];
      gradient[b1_off + i] += dh;
      double* grow = &gradient[w1_off + static_cast<std::size_t>(i) * in_dim];
      const double* wrow = &p.w1[static_cast<std::size_t>(i) * in_dim];
      for (int j = 0; j < in_dim; ++j) {
        grow[j] += dh * s.input[j];
        dinput[j] += dh * wrow[j];
      }
    }
    if (p.path_embedding_dim > 0) {
      for (int a = 0; a < p.path_embedding_dim; ++a) {
        const double da = dinput[p.feature_dim + a];
        if (da == 0.0) continue;
        for (int b = 0; b < p.encoding_dim; ++b) {
          gradient[emb_off + static_cast<std::size_t>(a) * p.encoding_dim + b] +=
              da * row.encoding[b];
        }
      }
    }
  }
  return loss;
}

}  // namespace

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

GateFeatures build_features(std::span<const double> current, std::span<const double> previous,
                            int num_classes) {
  if (static_cast<int>(current.size()) != num_classes) {
    throw std::invalid_argument("build_features: current vector length mismatch");
  }
  if (!previous.empty() && static_cast<int>(previous.size()) != num_classes) {
    throw std::invalid_argument("build_features: previous vector length mismatch");
  }
  const std::span<const double> prev = previous.empty() ? current : previous;

  GateFeatures f;
  f.u.reserve(2 * num_classes + 4);
  f.u.insert(f.u.end(), current.begin(), current.end());
  f.u.insert(f.u.end(), prev.begin(), prev.end());
  f.u.push_back(entropy(current));
  f.u.push_back(entropy(prev));
  f.u.push_back(*std::max_element(prev.begin(), prev.end()));
  f.u.push_back(*std::max_element(current.begin(), current.end()));
  return f;
}

PathEncoding encode_path(const Path& path, int num_exits) {
  if (path.depth() > num_exits) {
    throw std::invalid_argument("encode_path: path deeper than num_exits");
  }
  PathEncoding enc;
  enc.p.assign(num_exits + 1, 0.0);
  for (int i = 0; i < path.depth(); ++i) enc.p[i] = static_cast<double>(path.bits[i]);
  enc.p[num_exits] = static_cast<double>(path.depth());
  return enc;
}

std::size_t GatePredictor::parameter_count() const {
  return embed_w.size() + w1.size() + b1.size() + w2.size() + 1;
}

double GatePredictor::predict(std::span<const double> features,
                              std::span<const double> encoding) const {
  if (static_cast<int>(features.size()) != feature_dim ||
      static_cast<int>(encoding.size()) != encoding_dim) {
    throw std::invalid_argument("predict: input dimensions do not match the predictor");
  }
  ForwardScratch s;
  return forward(*this, features, encoding, s);
}

GatePredictor make_gate_predictor(int gate, int feature_dim, int encoding_dim, int hidden_dim,
                                  int path_embedding_dim, bool sigmoid_output,
                                  std::uint64_t seed) {
  if (feature_dim < 1 || encoding_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("make_gate_predictor: dimensions must be positive");
  }
  GatePredictor p;
  p.gate = gate;
  p.sigmoid_output = sigmoid_output;
  p.feature_dim = feature_dim;
  p.encoding_dim = encoding_dim;
  p.path_embedding_dim = path_embedding_dim;
  p.hidden_dim = hidden_dim;

  Rng rng(derive_seed(seed, "init"));
  auto glorot = [&rng](std::vector<double>& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = (2.0 * rng.next_double() - 1.0) * limit;
  };
  if (path_embedding_dim > 0) {
    p.embed_w.assign(static_cast<std::size_t>(path_embedding_dim) * encoding_dim, 0.0);
    glorot(p.embed_w, encoding_dim, path_embedding_dim);
  }
  const int in_dim = p.input_dim();
  p.w1.assign(static_cast<std::size_t>(hidden_dim) * in_dim, 0.0);
  glorot(p.w1, in_dim, hidden_dim);
  p.b1.assign(hidden_dim, 0.0);
  p.w2.assign(hidden_dim, 0.0);
  glorot(p.w2, hidden_dim, 1);
  p.b2 = 0.0;
  return p;
}

double predict_pe(const GatePredictor& predictor, const GateFeatures& features,
                  const PathEncoding& encoding) {
  return predictor.predict(features.u, encoding.p);
}

namespace {

// Distinct prefixes of the given length among set members deep enough to
// provide one; canonical order.
std::vector<Path> gate_prefixes(const PathSet& paths, int length) {
  std::vector<Path> out;
  for (const Path& p : paths.paths) {
    if (p.depth() < length) continue;
    Path prefix = p.prefix(length);
    if (std::find(out.begin(), out.end(), prefix) == out.end()) out.push_back(prefix);
  }
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

std::vector<Path> pick_subset(const std::vector<Path>& items, std::size_t want, Rng& rng) {
  if (items.size() <= want) return items;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Path> out;
  out.reserve(want);
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(idx[i], idx[i + rng.next_index(idx.size() - i)]);
    out.push_back(items[idx[i]]);
  }
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

}  // namespace

std::vector<std::vector<TrainingRow>> build_training_rows(
    std::span<const SampleRecord> records, const PathSet& paths,
    const DiscretizerModel& discretizer, const NetworkTopology& topology, std::uint64_t seed,
    int prefixes_per_gate, int candidates_per_prefix) {
  const int num_exits = topology.num_exits();
  std::vector<std::vector<TrainingRow>> out(num_exits >= 2 ? num_exits - 1 : 0);
  if (num_exits < 2 || prefixes_per_gate < 1) return out;

  // Geometry is shared by every record; precompute it per gate.
  struct GateGeometry {
    std::vector<Path> prefixes;
    std::vector<std::vector<Path>> candidates;  // aligned with prefixes
  };
  std::vector<GateGeometry> geometry(num_exits - 1);
  for (int j = 2; j <= num_exits; ++j) {
    GateGeometry& g = geometry[j - 2];
    g.prefixes = gate_prefixes(paths, j - 1);
    for (const Path& prefix : g.prefixes) {
      g.candidates.push_back(continuations(prefix, paths).paths);
    }
  }

  for (const SampleRecord& record : records) {
    for (int j = 2; j <= num_exits; ++j) {
      const GateGeometry& g = geometry[j - 2];
      if (g.prefixes.empty()) continue;
      Rng rng(derive_seed(seed, "rows:" + std::to_string(j) + ":" + record.id));
      const std::vector<Path> chosen =
          pick_subset(g.prefixes, static_cast<std::size_t>(prefixes_per_gate), rng);

      for (const Path& prefix : chosen) {
        const auto geo_it = std::find(g.prefixes.begin(), g.prefixes.end(), prefix);
        const std::vector<Path>& all_candidates =
            g.candidates[geo_it - g.prefixes.begin()];
        std::vector<Path> candidates = all_candidates;
        if (candidates_per_prefix > 0 &&
            candidates.size() > static_cast<std::size_t>(candidates_per_prefix)) {
          // The exit-now candidate must survive the cap.
          std::vector<Path> extensions;
          bool has_exit_now = false;
          for (const Path& c : candidates) {
            if (c == prefix) {
              has_exit_now = true;
            } else {
              extensions.push_back(c);
            }
          }
          const std::size_t budget =
              static_cast<std::size_t>(candidates_per_prefix) - (has_exit_now ? 1 : 0);
          candidates = pick_subset(extensions, budget, rng);
          if (has_exit_now) candidates.insert(candidates.begin(), prefix);
        }

        const std::vector<double>& current = record.probs_for(prefix.key());
        const int num_classes = static_cast<int>(current.size());
        std::span<const double> previous;
        if (j > 2) previous = record.probs_for(prefix.prefix(j - 2).key());
        const GateFeatures features = build_features(current, previous, num_classes);

        for (const Path& candidate : candidates) {
          TrainingRow row;
          row.gate = j;
          row.features = features.u;
          row.encoding = encode_path(candidate, num_exits).p;
          row.target = assign_target(discretizer, candidate, record.probs_for(candidate.key()));
          out[j - 2].push_back(std::move(row));
        }
      }
    }
  }
  return out;
}

std::vector<std::vector<TrainingRow>> build_next_step_rows(
    std::span<const SampleRecord> records, const PathSet& paths,
    const DiscretizerModel& discretizer, const NetworkTopology& topology, double lambda,
    std::uint64_t seed, int prefixes_per_gate) {
  const int num_exits = topology.num_exits();
  std::vector<std::vector<TrainingRow>> out(num_exits >= 2 ? num_exits - 1 : 0);
  if (num_exits < 2 || prefixes_per_gate < 1) return out;

  std::vector<std::vector<Path>> prefixes_by_gate(num_exits - 1);
  for (int j = 2; j <= num_exits; ++j) {
    prefixes_by_gate[j - 2] = gate_prefixes(paths, j - 1);
  }

  for (const SampleRecord& record : records) {
    for (int j = 2; j <= num_exits; ++j) {
      const std::vector<Path>& all_prefixes = prefixes_by_gate[j - 2];
      if (all_prefixes.empty()) continue;
      Rng rng(derive_seed(seed, "nbsrows:" + std::to_string(j) + ":" + record.id));
      const std::vector<Path> chosen =
          pick_subset(all_prefixes, static_cast<std::size_t>(prefixes_per_gate), rng);

      for (const Path& prefix : chosen) {
        const PathSet conts = continuations(prefix, paths);

        const std::vector<double>& current = record.probs_for(prefix.key());
        const int num_classes = static_cast<int>(current.size());
        std::span<const double> previous;
        if (j > 2) previous = record.probs_for(prefix.prefix(j - 2).key());
        const GateFeatures features = build_features(current, previous, num_classes);

        auto scalarized = [&](const Path& p) {
          return lambda * path_cost(p, topology) +
                 assign_target(discretizer, p, record.probs_for(p.key()));
        };

        // Exit option: the prefix itself, when it is a complete path.
        if (conts.contains(prefix)) {
          TrainingRow row;
          row.gate = j;
          row.features = features.u;
          row.encoding = encode_path(prefix, num_exits).p;
          row.target = scalarized(prefix);
          out[j - 2].push_back(std::move(row));
        }

        // One option per available next bit: best scalarized loss in that branch.
        std::vector<int> next_bits;
        for (const Path& c : conts.paths) {
          if (c.depth() <= prefix.depth()) continue;
          const int b = c.bits[prefix.depth()];
          if (std::find(next_bits.begin(), next_bits.end(), b) == next_bits.end()) {
            next_bits.push_back(b);
          }
        }
        std::sort(next_bits.begin(), next_bits.end());
        for (int b : next_bits) {
          Path step = prefix;
          step.bits.push_back(b);
          double best = std::numeric_limits<double>::infinity();
          for (const Path& c : conts.paths) {
            if (step.is_prefix_of(c)) best = std::min(best, scalarized(c));
          }
          TrainingRow row;
          row.gate = j;
          row.features = features.u;
          row.encoding = encode_path(step, num_exits).p;
          row.target = best;
          out[j - 2].push_back(std::move(row));
        }
      }
    }
  }
  return out;
}

double mean_squared_error(const GatePredictor& predictor, std::span<const TrainingRow> rows) {
  if (rows.empty()) throw std::invalid_argument("mean_squared_error: no rows");
  ForwardScratch s;
  double total = 0.0;
  for (const TrainingRow& row : rows) {
    const double err = forward(predictor, row.features, row.encoding, s) - row.target;
    total += err * err;
  }
  return total / static_cast<double>(rows.size());
}

double loss_and_gradient(const GatePredictor& predictor, std::span<const TrainingRow> batch,
                         std::vector<double>& gradient) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  std::vector<std::size_t> indices(batch.size());
  std::iota(indices.begin(), indices.end(), 0);
  return batch_loss_and_gradient(predictor, batch, indices, gradient);
}

GatePredictor train_gate(std::span<const TrainingRow> rows,
                         std::span<const TrainingRow> validation_rows, const TrainConfig& config,
                         std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("train_gate: no training rows");
  if (config.hidden_dim < 1 || config.batch_size < 1 || config.max_epochs < 0 ||
      config.patience < 1) {
    throw std::invalid_argument("train_gate: bad config");
  }
  const std::span<const TrainingRow> stop_rows =
      validation_rows.empty() ? rows : validation_rows;

  GatePredictor predictor = make_gate_predictor(
      rows[0].gate, static_cast<int>(rows[0].features.size()),
      static_cast<int>(rows[0].encoding.size()), config.hidden_dim, config.path_embedding_dim,
      config.sigmoid_output, derive_seed(seed, "weights"));

  std::vector<double> params = pack_parameters(predictor);
  std::vector<double> m(params.size(), 0.0);
  std::vector<double> v(params.size(), 0.0);
  std::vector<double> gradient;

  std::vector<double> best_params = params;
  double best_mse = mean_squared_error(predictor, stop_rows);

  Rng rng(derive_seed(seed, "epochs"));
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  int stale_epochs = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len =
          std::min(static_cast<std::size_t>(config.batch_size), order.size() - start);
      batch_loss_and_gradient(predictor, rows, {order.data() + start, len}, gradient);

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gradient[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gradient[i] * gradient[i];
        const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.epsilon);
        params[i] -= config.learning_rate * (update + config.weight_decay * params[i]);
      }
      unpack_parameters(params, predictor);
    }

    const double mse = mean_squared_error(predictor, stop_rows);
    if (mse < best_mse) {
      best_mse = mse;
      best_params = params;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) break;
    }
  }

  unpack_parameters(best_params, predictor);
  return predictor;
}

}  // namespace quee
