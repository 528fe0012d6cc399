#include "quee/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "quee/errors.hpp"

namespace quee {

PolicyMode parse_policy_mode(const std::string& name) {
  if (name == "quee") return PolicyMode::quee;
  if (name == "next-best-step") return PolicyMode::next_best_step;
  if (name == "oracle") return PolicyMode::oracle;
  if (name == "threshold-exit") return PolicyMode::threshold_exit;
  if (name == "fixed-path") return PolicyMode::fixed_path;
  throw std::invalid_argument("unknown policy mode '" + name + "'");
}

std::string to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::quee: return "quee";
    case PolicyMode::next_best_step: return "next-best-step";
    case PolicyMode::oracle: return "oracle";
    case PolicyMode::threshold_exit: return "threshold-exit";
    case PolicyMode::fixed_path: return "fixed-path";
  }
  return "?";
}

std::size_t choose_candidate(std::span<const ScoredCandidate> candidates, double lambda) {
  if (candidates.empty()) throw std::invalid_argument("choose_candidate: no candidates");
  std::size_t best = 0;
  double best_score = lambda * candidates[0].cost + candidates[0].predicted_error;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double score = lambda * candidates[i].cost + candidates[i].predicted_error;
    if (score < best_score ||
        (score == best_score && prefer_candidate(candidates[i].cost, candidates[i].path,
                                                 candidates[best].cost, candidates[best].path))) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

namespace {

int resolve_gate1_bits(const NetworkTopology& topology, int gate1_bits) {
  if (gate1_bits == 0) return topology.max_bits();
  if (!topology.has_bits(gate1_bits)) {
    throw std::invalid_argument("gate 1: bit-width " + std::to_string(gate1_bits) +
                                " not in topology");
  }
  return gate1_bits;
}

const GatePredictor& gate_for(std::span<const GatePredictor> gates, int j) {
  for (const GatePredictor& g : gates) {
    if (g.gate == j) return g;
  }
  throw std::invalid_argument("router: no predictor for gate " + std::to_string(j));
}

void finish_trace(DecisionTrace& trace, const SampleRecord& record, const Path& final_path,
                  const NetworkTopology& topology) {
  trace.final_path = final_path;
  trace.cost = path_cost(final_path, topology);
  trace.predicted_class = argmax_class(record.probs_for(final_path.key()));
  trace.label = record.label;
  trace.correct = trace.predicted_class == record.label;
}

GateFeatures features_at(const SampleRecord& record, const Path& prefix, int gate) {
  const std::vector<double>& current = record.probs_for(prefix.key());
  std::span<const double> previous;
  if (gate > 2) previous = record.probs_for(prefix.prefix(gate - 2).key());
  return build_features(current, previous, static_cast<int>(current.size()));
}

}  // namespace

DecisionTrace route_sample(const SampleRecord& record, std::span<const GatePredictor> gates,
                           const PathSet& paths, const NetworkTopology& topology,
                           const RoutingPolicy& policy) {
  topology.validate();
  const int num_exits = topology.num_exits();

  DecisionTrace trace;
  trace.sample_id = record.id;

  Path prefix{{resolve_gate1_bits(topology, policy.gate1_bits)}};
  if (num_exits == 1) {
    finish_trace(trace, record, prefix, topology);
    return trace;
  }

  for (int j = 2; j <= num_exits; ++j) {
    const PathSet conts = continuations(prefix, paths);
    if (conts.size() == 0) {
      throw DataError("route_sample: no continuations for prefix " + prefix.key());
    }

    const GatePredictor& gate = gate_for(gates, j);
    const GateFeatures features = features_at(record, prefix, j);

    std::vector<ScoredCandidate> scored;
    scored.reserve(conts.size());
    for (const Path& candidate : conts.paths) {
      scored.push_back({candidate, path_cost(candidate, topology),
                        predict_pe(gate, features, encode_path(candidate, num_exits))});
    }
    const std::size_t pick = choose_candidate(scored, policy.lambda);
    const Path& target = scored[pick].path;

    GateDecision decision;
    decision.gate = j;
    for (const ScoredCandidate& c : scored) decision.candidates.push_back(c.path.key());
    decision.chosen = target.key();
    trace.decisions.push_back(std::move(decision));

    if (target == prefix) {
      finish_trace(trace, record, prefix, topology);
      return trace;
    }
    prefix.bits.push_back(target.bits[prefix.depth()]);
  }

  finish_trace(trace, record, prefix, topology);
  return trace;
}

DecisionTrace route_oracle(const SampleRecord& record, const PathSet& paths,
                           const NetworkTopology& topology, double lambda) {
  if (paths.size() == 0) throw std::invalid_argument("route_oracle: empty path set");

  std::vector<ScoredCandidate> scored;
  scored.reserve(paths.size());
  for (const Path& path : paths.paths) {
    const double error =
        argmax_class(record.probs_for(path.key())) == record.label ? 0.0 : 1.0;
    scored.push_back({path, path_cost(path, topology), error});
  }
  const std::size_t pick = choose_candidate(scored, lambda);

  DecisionTrace trace;
  trace.sample_id = record.id;
  finish_trace(trace, record, scored[pick].path, topology);
  return trace;
}

DecisionTrace route_threshold(const SampleRecord& record, const PathSet& paths,
                              const NetworkTopology& topology, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::invalid_argument("route_threshold: threshold must be in [0, 1]");
  }
  (void)paths;
  const int num_exits = topology.num_exits();

  DecisionTrace trace;
  trace.sample_id = record.id;
  Path spine;
  for (int depth = 1; depth <= num_exits; ++depth) {
    spine.bits.push_back(topology.max_bits());
    const std::vector<double>& probs = record.probs_for(spine.key());
    const double top = *std::max_element(probs.begin(), probs.end());
    const bool exit_now = top > threshold || depth == num_exits;

    GateDecision decision;
    decision.gate = depth;
    decision.candidates = {spine.key()};
    decision.chosen = exit_now ? spine.key() : "continue";
    trace.decisions.push_back(std::move(decision));

    if (exit_now) break;
  }
  finish_trace(trace, record, spine, topology);
  return trace;
}

DecisionTrace route_fixed(const SampleRecord& record, const Path& path,
                          const NetworkTopology& topology) {
  DecisionTrace trace;
  trace.sample_id = record.id;
  finish_trace(trace, record, path, topology);
  return trace;
}

DecisionTrace route_next_best_step(const SampleRecord& record,
                                   std::span<const GatePredictor> gates, const PathSet& paths,
                                   const NetworkTopology& topology, int gate1_bits) {
  topology.validate();
  const int num_exits = topology.num_exits();

  DecisionTrace trace;
  trace.sample_id = record.id;

  Path prefix{{resolve_gate1_bits(topology, gate1_bits)}};
  if (num_exits == 1) {
    finish_trace(trace, record, prefix, topology);
    return trace;
  }

  for (int j = 2; j <= num_exits; ++j) {
    const PathSet conts = continuations(prefix, paths);
    if (conts.size() == 0) {
      throw DataError("route_next_best_step: no continuations for prefix " + prefix.key());
    }
    const GatePredictor& gate = gate_for(gates, j);
    const GateFeatures features = features_at(record, prefix, j);

    // One option per step: the prefix itself (exit) plus each next bit-width.
    struct StepOption {
      Path step;         // prefix, or prefix extended by one block
      bool exit = false;
      double immediate_cost = 0.0;
      double score = 0.0;
    };
    std::vector<StepOption> options;
    if (conts.contains(prefix)) {
      options.push_back({prefix, true, 0.0, 0.0});
    }
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
      options.push_back(
          {step, false, topology.block_flops[prefix.depth()] * static_cast<double>(b), 0.0});
    }

    std::size_t best = 0;
    for (std::size_t i = 0; i < options.size(); ++i) {
      options[i].score =
          gate.predict(features.u, encode_path(options[i].step, num_exits).p);
      if (i > 0 && (options[i].score < options[best].score ||
                    (options[i].score == options[best].score &&
                     options[i].immediate_cost < options[best].immediate_cost))) {
        best = i;
      }
    }

    GateDecision decision;
    decision.gate = j;
    for (const StepOption& o : options) {
      decision.candidates.push_back(o.exit ? o.step.key() + " (exit)" : o.step.key());
    }
    decision.chosen = options[best].step.key();
    trace.decisions.push_back(std::move(decision));

    if (options[best].exit) {
      finish_trace(trace, record, prefix, topology);
      return trace;
    }
    prefix = options[best].step;
  }

  finish_trace(trace, record, prefix, topology);
  return trace;
}

void save_traces(std::span<const DecisionTrace> traces, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("save_traces: cannot open " + file);
  for (const DecisionTrace& trace : traces) {
    nlohmann::ordered_json line;
    line["id"] = trace.sample_id;
    line["final_path"] = trace.final_path.key();
    line["cost"] = trace.cost;
    line["predicted_class"] = trace.predicted_class;
    line["label"] = trace.label;
    line["correct"] = trace.correct;
    nlohmann::ordered_json decisions = nlohmann::ordered_json::array();
    for (const GateDecision& d : trace.decisions) {
      nlohmann::ordered_json item;
      item["gate"] = d.gate;
      item["candidates"] = d.candidates;
      item["chosen"] = d.chosen;
      decisions.push_back(std::move(item));
    }
    line["decisions"] = std::move(decisions);
    out << line.dump() << '\n';
  }
}

std::vector<DecisionTrace> load_traces(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("load_traces: cannot open " + file);
  std::vector<DecisionTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json doc = nlohmann::json::parse(line);
      DecisionTrace trace;
      trace.sample_id = doc.at("id").get<std::string>();
      trace.final_path = Path::from_key(doc.at("final_path").get<std::string>());
      trace.cost = doc.at("cost").get<double>();
      trace.predicted_class = doc.at("predicted_class").get<int>();
      trace.label = doc.at("label").get<int>();
      trace.correct = doc.at("correct").get<bool>();
      for (const nlohmann::json& item : doc.at("decisions")) {
        GateDecision d;
        d.gate = item.at("gate").get<int>();
        d.candidates = item.at("candidates").get<std::vector<std::string>>();
        d.chosen = item.at("chosen").get<std::string>();
        trace.decisions.push_back(std::move(d));
      }
      traces.push_back(std::move(trace));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("load_traces: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return traces;
}

}  // namespace quee
