#pragma once

#include <string>
#include <vector>

#include "quee/discretizer.hpp"
#include "quee/path_space.hpp"
#include "quee/predictor.hpp"

namespace quee {

// Everything routing needs, in one versioned text file. The topology hash is
// checked on load so a model cannot be applied to a different network.
struct ModelBundle {
  NetworkTopology topology;
  int num_classes = 0;
  PathSet full_paths;  // dataset columns
  PathSet used_paths;  // candidate set after sampling
  DiscretizerModel discretizer;
  std::vector<GatePredictor> gates;      // error-probability heads, gates 2..E
  std::vector<GatePredictor> nbs_gates;  // next-best-step heads (optional)
  double nbs_lambda = 0.0;               // trade-off baked into nbs_gates
};

void save_model(const ModelBundle& bundle, const std::string& file);

// Doubles round-trip bit-exactly. Throws SchemaError on version or topology
// hash mismatch.
ModelBundle load_model(const std::string& file);

}  // namespace quee
