#pragma once

#include <stdexcept>
#include <string>

namespace quee {

// Malformed input files (dataset records, model bundles). The message names the
// offending record or field.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// A record lacks data an operation needs at runtime (e.g. a probability vector
// for a path the router has to evaluate).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Failure inside a pipeline stage, prefixed with the stage name.
struct PipelineError : std::runtime_error {
  PipelineError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_name(stage) {}
  std::string stage_name;
};

}  // namespace quee
