#include "quee/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "quee/errors.hpp"
#include "quee/rng.hpp"

namespace quee {

namespace {

constexpr int kDatasetVersion = 1;
constexpr const char* kDatasetFormat = "quee.dataset";
constexpr double kSumTolerance = 1e-6;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void validate_record(const SampleRecord& record, int num_classes,
                     const std::vector<std::string>& path_keys) {
  if (record.label < 0 || record.label >= num_classes) {
    throw SchemaError("record " + record.id + ": label " + std::to_string(record.label) +
                      " outside [0, " + std::to_string(num_classes) + ")");
  }
  for (const std::string& key : path_keys) {
    auto it = record.probs.find(key);
    if (it == record.probs.end()) {
      throw SchemaError("record " + record.id + ": missing path " + key);
    }
    const std::vector<double>& v = it->second;
    if (static_cast<int>(v.size()) != num_classes) {
      throw SchemaError("record " + record.id + ": path " + key + " has " +
                        std::to_string(v.size()) + " entries, expected " +
                        std::to_string(num_classes));
    }
    double sum = 0.0;
    for (double p : v) {
      if (p < 0.0) throw SchemaError("record " + record.id + ": path " + key + " has negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw SchemaError("record " + record.id + ": path " + key + " sums to " +
                        std::to_string(sum));
    }
  }
}

}  // namespace

const std::vector<double>& SampleRecord::probs_for(const std::string& path_key) const {
  auto it = probs.find(path_key);
  if (it == probs.end()) {
    throw DataError("record " + id + ": no probability vector for path " + path_key);
  }
  return it->second;
}

void SyntheticConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synthetic: num_classes must be >= 2");
  if (num_samples == 0) throw std::invalid_argument("synthetic: num_samples must be >= 1");
  const double total = train_fraction + validation_fraction + test_fraction;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("synthetic: split fractions must sum to 1");
  }
  if (train_fraction < 0 || validation_fraction < 0 || test_fraction < 0) {
    throw std::invalid_argument("synthetic: split fractions must be nonnegative");
  }
  if (exit_gain <= 0) throw std::invalid_argument("synthetic: exit_gain must be > 0");
  if (bit_gain < 0) throw std::invalid_argument("synthetic: bit_gain must be >= 0");
  if (noise_scale < 0) throw std::invalid_argument("synthetic: noise_scale must be >= 0");
  if (bit_sensitivity_spread < 0) {
    throw std::invalid_argument("synthetic: bit_sensitivity_spread must be >= 0");
  }
  if (sharpness <= 0 || sharpness >= 0.5) {
    throw std::invalid_argument("synthetic: sharpness must be in (0, 0.5)");
  }
}

int argmax_class(std::span<const double> probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

SplitDataset generate_synthetic(const SyntheticConfig& config, const NetworkTopology& topology,
                                const PathSet& paths) {
  config.validate();
  topology.validate();
  if (paths.size() == 0) throw std::invalid_argument("synthetic: empty path set");

  const int num_classes = config.num_classes;
  SplitDataset out;
  out.num_classes = num_classes;
  for (const Path& p : paths.paths) out.path_keys.push_back(p.key());

  Rng rng(derive_seed(config.seed, "synthetic"));
  const double floor_mass = 1.0 / num_classes + config.sharpness;
  const double ceil_mass = 1.0 - config.sharpness;

  const std::size_t n_train = static_cast<std::size_t>(config.train_fraction *
                                                       static_cast<double>(config.num_samples));
  const std::size_t n_val = static_cast<std::size_t>(config.validation_fraction *
                                                     static_cast<double>(config.num_samples));

  std::vector<SampleRecord> records;
  records.reserve(config.num_samples);
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    SampleRecord record;
    record.id = "s" + std::to_string(i);
    record.label = static_cast<int>(rng.next_index(num_classes));
    const bool in_test = i >= n_train + n_val;
    const double difficulty =
        rng.next_normal() + (in_test ? config.test_difficulty_shift : 0.0);
    const double bit_factor =
        std::max(0.0, 1.0 + config.bit_sensitivity_spread * rng.next_normal());

    for (const Path& path : paths.paths) {
      const double skill = config.exit_gain * path.depth() +
                           config.bit_gain * bit_factor * path.mean_bits();
      const double q = logistic(skill - difficulty);
      const bool correct = rng.next_double() < q;
      int predicted = record.label;
      if (!correct) {
        predicted = static_cast<int>(
            (record.label + 1 + rng.next_index(num_classes - 1)) % num_classes);
      }
      const double mass = std::clamp(q, floor_mass, ceil_mass);

      std::vector<double> weights(num_classes, 0.0);
      double weight_sum = 0.0;
      for (int c = 0; c < num_classes; ++c) {
        if (c == predicted) continue;
        weights[c] = 1.0 + config.noise_scale * rng.next_double();
        weight_sum += weights[c];
      }
      std::vector<double> probs(num_classes, 0.0);
      probs[predicted] = mass;
      for (int c = 0; c < num_classes; ++c) {
        if (c == predicted) continue;
        probs[c] = (1.0 - mass) * weights[c] / weight_sum;
      }
      record.probs.emplace(path.key(), std::move(probs));
    }
    records.push_back(std::move(record));
  }

  const std::size_t n = records.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      out.train.push_back(std::move(records[i]));
    } else if (i < n_train + n_val) {
      out.validation.push_back(std::move(records[i]));
    } else {
      out.test.push_back(std::move(records[i]));
    }
  }
  return out;
}

void save_dataset(const SplitDataset& dataset, const std::string& file) {
  std::ofstream outf(file);
  if (!outf) throw std::runtime_error("save_dataset: cannot open " + file);

  nlohmann::ordered_json header;
  header["format"] = kDatasetFormat;
  header["version"] = kDatasetVersion;
  header["num_classes"] = dataset.num_classes;
  header["path_keys"] = dataset.path_keys;
  outf << header.dump() << '\n';

  auto write_split = [&](const std::vector<SampleRecord>& records, const char* split) {
    for (const SampleRecord& record : records) {
      nlohmann::ordered_json line;
      line["id"] = record.id;
      line["split"] = split;
      line["label"] = record.label;
      nlohmann::ordered_json probs;
      for (const std::string& key : dataset.path_keys) {
        probs[key] = record.probs.at(key);
      }
      line["probs"] = std::move(probs);
      outf << line.dump() << '\n';
    }
  };
  write_split(dataset.train, "train");
  write_split(dataset.validation, "validation");
  write_split(dataset.test, "test");
}

SplitDataset load_dataset(const std::string& file, const NetworkTopology& topology,
                          const PathSet& paths) {
  topology.validate();
  std::ifstream in(file);
  if (!in) throw SchemaError("load_dataset: cannot open " + file);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("load_dataset: empty file " + file);

  SplitDataset out;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != kDatasetFormat) {
      throw SchemaError("load_dataset: unknown format '" + header.value("format", "") + "'");
    }
    const int version = header.value("version", -1);
    if (version != kDatasetVersion) {
      throw SchemaError("load_dataset: unsupported version " + std::to_string(version));
    }
    out.num_classes = header.at("num_classes").get<int>();
    out.path_keys = header.at("path_keys").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("load_dataset: bad header: " + std::string(e.what()));
  }
  if (out.num_classes < 2) throw SchemaError("load_dataset: num_classes must be >= 2");

  // The active path set must be covered by the file's columns.
  std::vector<std::string> active_keys;
  for (const Path& p : paths.paths) {
    active_keys.push_back(p.key());
    if (p.depth() > topology.num_exits()) {
      throw SchemaError("load_dataset: path " + p.key() + " deeper than topology");
    }
    if (std::find(out.path_keys.begin(), out.path_keys.end(), p.key()) == out.path_keys.end()) {
      throw SchemaError("load_dataset: header lacks path " + p.key());
    }
  }

  std::unordered_map<std::string, bool> seen_ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    SampleRecord record;
    std::string split;
    try {
      nlohmann::json doc = nlohmann::json::parse(line);
      record.id = doc.at("id").get<std::string>();
      split = doc.at("split").get<std::string>();
      record.label = doc.at("label").get<int>();
      for (auto& [key, value] : doc.at("probs").items()) {
        record.probs.emplace(key, value.get<std::vector<double>>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("load_dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
    if (seen_ids.count(record.id)) {
      throw SchemaError("record " + record.id + ": duplicate id");
    }
    seen_ids.emplace(record.id, true);
    validate_record(record, out.num_classes, out.path_keys);

    if (split == "train") {
      out.train.push_back(std::move(record));
    } else if (split == "validation") {
      out.validation.push_back(std::move(record));
    } else if (split == "test") {
      out.test.push_back(std::move(record));
    } else {
      throw SchemaError("record " + record.id + ": unknown split '" + split + "'");
    }
  }
  return out;
}

double empirical_accuracy(std::span<const SampleRecord> records, const Path& path) {
  if (records.empty()) throw std::invalid_argument("empirical_accuracy: no records");
  const std::string key = path.key();
  std::size_t correct = 0;
  for (const SampleRecord& record : records) {
    if (argmax_class(record.probs_for(key)) == record.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace quee
