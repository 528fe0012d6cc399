#include "quee/model_io.hpp"

#include <fstream>

#include <json.hpp>

#include "quee/errors.hpp"

namespace quee {

namespace {

constexpr int kModelVersion = 1;
constexpr const char* kModelFormat = "quee.model";

using ojson = nlohmann::ordered_json;

ojson gate_to_json(const GatePredictor& g) {
  ojson out;
  out["gate"] = g.gate;
  out["sigmoid_output"] = g.sigmoid_output;
  out["feature_dim"] = g.feature_dim;
  out["encoding_dim"] = g.encoding_dim;
  out["path_embedding_dim"] = g.path_embedding_dim;
  out["hidden_dim"] = g.hidden_dim;
  out["embed_w"] = g.embed_w;
  out["w1"] = g.w1;
  out["b1"] = g.b1;
  out["w2"] = g.w2;
  out["b2"] = g.b2;
  return out;
}

GatePredictor gate_from_json(const nlohmann::json& doc) {
  GatePredictor g;
  g.gate = doc.at("gate").get<int>();
  g.sigmoid_output = doc.at("sigmoid_output").get<bool>();
  g.feature_dim = doc.at("feature_dim").get<int>();
  g.encoding_dim = doc.at("encoding_dim").get<int>();
  g.path_embedding_dim = doc.at("path_embedding_dim").get<int>();
  g.hidden_dim = doc.at("hidden_dim").get<int>();
  g.embed_w = doc.at("embed_w").get<std::vector<double>>();
  g.w1 = doc.at("w1").get<std::vector<double>>();
  g.b1 = doc.at("b1").get<std::vector<double>>();
  g.w2 = doc.at("w2").get<std::vector<double>>();
  g.b2 = doc.at("b2").get<double>();
  return g;
}

std::vector<std::string> keys_of(const PathSet& paths) {
  std::vector<std::string> out;
  for (const Path& p : paths.paths) out.push_back(p.key());
  return out;
}

PathSet paths_from_keys(const std::vector<std::string>& keys) {
  PathSet out;
  for (const std::string& key : keys) out.paths.push_back(Path::from_key(key));
  return out;
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& file) {
  ojson doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelVersion;
  ojson topo;
  topo["num_exits"] = bundle.topology.num_exits();
  topo["block_flops"] = bundle.topology.block_flops;
  topo["bit_widths"] = bundle.topology.bit_widths;
  doc["topology"] = std::move(topo);
  doc["topology_hash"] = topology_hash(bundle.topology);
  doc["num_classes"] = bundle.num_classes;
  doc["full_paths"] = keys_of(bundle.full_paths);
  doc["used_paths"] = keys_of(bundle.used_paths);

  ojson disc;
  disc["k"] = bundle.discretizer.k;
  disc["seed"] = bundle.discretizer.seed;
  ojson disc_paths = ojson::array();
  for (const PathClusterModel& pcm : bundle.discretizer.paths) {
    ojson entry;
    entry["path"] = pcm.path_key;
    entry["centroids"] = pcm.centroids;
    entry["delegates"] = pcm.delegates;
    entry["member_counts"] = pcm.member_counts;
    entry["fallback"] = pcm.fallback_delegate;
    disc_paths.push_back(std::move(entry));
  }
  disc["paths"] = std::move(disc_paths);
  doc["discretizer"] = std::move(disc);

  ojson gates = ojson::array();
  for (const GatePredictor& g : bundle.gates) gates.push_back(gate_to_json(g));
  doc["gates"] = std::move(gates);
  ojson nbs = ojson::array();
  for (const GatePredictor& g : bundle.nbs_gates) nbs.push_back(gate_to_json(g));
  doc["nbs_gates"] = std::move(nbs);
  doc["nbs_lambda"] = bundle.nbs_lambda;

  std::ofstream out(file);
  if (!out) throw std::runtime_error("save_model: cannot open " + file);
  out << doc.dump(2) << '\n';
}

ModelBundle load_model(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("load_model: cannot open " + file);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_model: " + std::string(e.what()));
  }

  ModelBundle bundle;
  try {
    if (doc.value("format", "") != kModelFormat) {
      throw SchemaError("load_model: unknown format '" + doc.value("format", "") + "'");
    }
    if (doc.value("version", -1) != kModelVersion) {
      throw SchemaError("load_model: unsupported version " +
                        std::to_string(doc.value("version", -1)));
    }
    const nlohmann::json& topo = doc.at("topology");
    bundle.topology.block_flops = topo.at("block_flops").get<std::vector<double>>();
    bundle.topology.bit_widths = topo.at("bit_widths").get<std::vector<int>>();
    bundle.topology.validate();
    const std::string expected = doc.at("topology_hash").get<std::string>();
    if (expected != topology_hash(bundle.topology)) {
      throw SchemaError("load_model: topology hash mismatch");
    }
    bundle.num_classes = doc.at("num_classes").get<int>();
    bundle.full_paths = paths_from_keys(doc.at("full_paths").get<std::vector<std::string>>());
    bundle.used_paths = paths_from_keys(doc.at("used_paths").get<std::vector<std::string>>());

    const nlohmann::json& disc = doc.at("discretizer");
    bundle.discretizer.k = disc.at("k").get<int>();
    bundle.discretizer.seed = disc.at("seed").get<std::uint64_t>();
    for (const nlohmann::json& entry : disc.at("paths")) {
      PathClusterModel pcm;
      pcm.path_key = entry.at("path").get<std::string>();
      pcm.centroids = entry.at("centroids").get<std::vector<std::vector<double>>>();
      pcm.delegates = entry.at("delegates").get<std::vector<double>>();
      pcm.member_counts = entry.at("member_counts").get<std::vector<std::size_t>>();
      pcm.fallback_delegate = entry.at("fallback").get<double>();
      bundle.discretizer.index.emplace(pcm.path_key, bundle.discretizer.paths.size());
      bundle.discretizer.paths.push_back(std::move(pcm));
    }
    for (const nlohmann::json& entry : doc.at("gates")) {
      bundle.gates.push_back(gate_from_json(entry));
    }
    for (const nlohmann::json& entry : doc.at("nbs_gates")) {
      bundle.nbs_gates.push_back(gate_from_json(entry));
    }
    bundle.nbs_lambda = doc.at("nbs_lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_model: " + std::string(e.what()));
  }
  return bundle;
}

}  // namespace quee
