#pragma once

#include <span>
#include <string>
#include <vector>

#include "quee/dataset.hpp"
#include "quee/path_space.hpp"
#include "quee/predictor.hpp"

namespace quee {

enum class PolicyMode { quee, next_best_step, oracle, threshold_exit, fixed_path };

PolicyMode parse_policy_mode(const std::string& name);  // throws invalid_argument
std::string to_string(PolicyMode mode);

struct RoutingPolicy {
  PolicyMode mode = PolicyMode::quee;
  double lambda = 0.0;      // quee / oracle
  double threshold = 0.5;   // threshold_exit
  Path fixed;               // fixed_path
  int gate1_bits = 0;       // 0 selects the highest bit-width
};

struct GateDecision {
  int gate = 0;
  std::vector<std::string> candidates;  // keys scored at this gate
  std::string chosen;                   // the argmin (full target path or step)
};

struct DecisionTrace {
  std::string sample_id;
  std::vector<GateDecision> decisions;
  Path final_path;
  int predicted_class = -1;
  int label = -1;
  double cost = 0.0;
  bool correct = false;
};

// A scored candidate at one gate; exposed so the argmin arithmetic is testable
// on its own.
struct ScoredCandidate {
  Path path;
  double cost = 0.0;
  double predicted_error = 0.0;
};

// Index of the candidate minimizing lambda * cost + predicted_error, ties
// broken toward lower cost and then the lexicographically greater bits.
std::size_t choose_candidate(std::span<const ScoredCandidate> candidates, double lambda);

// Sequential gating: gate 1 picks the first block's bit-width, every later
// gate scores the surviving continuations with its predictor and takes one
// step toward the best, exiting when the best is the current prefix. Features
// only ever read vectors of prefixes the walk has evaluated.
DecisionTrace route_sample(const SampleRecord& record, std::span<const GatePredictor> gates,
                           const PathSet& paths, const NetworkTopology& topology,
                           const RoutingPolicy& policy);

// Per-sample optimum with the true error indicator in place of a prediction:
// argmin over the whole set of lambda * cost + [argmax != label].
DecisionTrace route_oracle(const SampleRecord& record, const PathSet& paths,
                           const NetworkTopology& topology, double lambda);

// Walks the all-max-bits path, exiting at the first depth whose max
// probability exceeds the threshold; the last exit is forced.
DecisionTrace route_threshold(const SampleRecord& record, const PathSet& paths,
                              const NetworkTopology& topology, double threshold);

DecisionTrace route_fixed(const SampleRecord& record, const Path& path,
                          const NetworkTopology& topology);

// One prediction per step option (exit or one of the next bit-widths); the
// gates must have been trained on next-step rows with the lambda baked into
// the targets.
DecisionTrace route_next_best_step(const SampleRecord& record,
                                   std::span<const GatePredictor> gates, const PathSet& paths,
                                   const NetworkTopology& topology, int gate1_bits = 0);

// Newline-delimited trace export; one JSON object per trace.
void save_traces(std::span<const DecisionTrace> traces, const std::string& file);
std::vector<DecisionTrace> load_traces(const std::string& file);

}  // namespace quee
