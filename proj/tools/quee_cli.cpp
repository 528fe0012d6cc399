// Command-line driver for the budgeted-inference experiments.
//
//   quee gen       synthesize a per-path probability dataset file
//   quee cluster   fit the per-path k-means error model
//   quee train     full training (clusters + gate predictors), write a model
//   quee route     route one split of a dataset with a trained model
//   quee eval      summarize a trace file into accuracy/cost with CIs
//   quee sweep     end-to-end pipeline, curve files for every policy
//   quee ece-study calibration error as a function of the cluster count
//   quee degrade   retrain under target noise, report RMSE and curves

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quee/errors.hpp"
#include "quee/harness.hpp"
#include "quee/model_io.hpp"
#include "quee/rng.hpp"

namespace fs = std::filesystem;
using namespace quee;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

struct SharedFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<std::size_t> path_cap;
};

void add_shared(CLI::App* cmd, SharedFlags& flags) {
  cmd->add_option("--config", flags.config_file, "experiment config (JSON)");
  cmd->add_option("--seed", flags.seed, "override the master seed");
  cmd->add_option("--k", flags.k, "override the cluster count");
  cmd->add_option("--path-cap", flags.path_cap, "override the sampled-path cap");
}

ExperimentConfig resolve_config(const SharedFlags& flags) {
  ExperimentConfig cfg = flags.config_file.empty()
                             ? ExperimentConfig::defaults()
                             : ExperimentConfig::from_file(flags.config_file);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.k) cfg.clusters = *flags.k;
  if (flags.path_cap) cfg.path_cap = *flags.path_cap;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(std::stod(token));
  }
  return out;
}

std::span<const SampleRecord> pick_split(const SplitDataset& dataset, const std::string& name) {
  if (name == "train") return dataset.train;
  if (name == "validation") return dataset.validation;
  if (name == "test") return dataset.test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

void write_point_file(const OperatingPoint& point, double lambda, bool have_lambda,
                      std::size_t count, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open " + file);
  out << "samples\taccuracy\taccuracy_ci95\tcost\tcost_ci95";
  if (have_lambda) out << "\tlambda\tmean_loss";
  out << "\n";
  out << count << '\t' << format_double(point.accuracy) << '\t'
      << format_double(point.accuracy_half_width) << '\t' << format_double(point.cost) << '\t'
      << format_double(point.cost_half_width);
  if (have_lambda) {
    const double loss = (1.0 - point.accuracy) + lambda * point.cost;
    out << '\t' << format_double(lambda) << '\t' << format_double(loss);
  }
  out << "\n";
}

int run_gen(const SharedFlags& flags, const std::string& out_file) {
  ExperimentConfig cfg = resolve_config(flags);
  const PathSet full = filter_monotone(enumerate_paths(cfg.topology));
  SyntheticConfig syn = cfg.synthetic;
  syn.seed = derive_seed(cfg.seed, "dataset");
  const SplitDataset dataset = generate_synthetic(syn, cfg.topology, full);
  save_dataset(dataset, out_file);
  std::printf("wrote %zu records (%zu train / %zu validation / %zu test) to %s\n",
              dataset.train.size() + dataset.validation.size() + dataset.test.size(),
              dataset.train.size(), dataset.validation.size(), dataset.test.size(),
              out_file.c_str());
  return 0;
}

int run_cluster(const SharedFlags& flags, const std::string& data_file,
                const std::string& out_file) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!data_file.empty()) cfg.dataset_file = data_file;
  const PipelineArtifacts a = run_clustering(cfg);
  save_model(a.to_bundle(), out_file);
  std::printf("fitted K=%d clusters over %zu paths on %zu records; model at %s\n",
              cfg.clusters, a.used_paths.size(), a.cluster_records.size(), out_file.c_str());
  return 0;
}

int run_train(const SharedFlags& flags, const std::string& data_file, const std::string& mode,
              double lambda, const std::string& out_file) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!data_file.empty()) cfg.dataset_file = data_file;
  const PipelineArtifacts a = run_training(cfg);
  ModelBundle bundle = a.to_bundle();
  if (mode == "next-best-step") {
    bundle.nbs_gates = train_nbs_gates(a, lambda);
    bundle.nbs_lambda = lambda;
  } else if (mode != "quee") {
    throw std::invalid_argument("train supports --mode quee or next-best-step");
  }
  save_model(bundle, out_file);
  std::printf("trained %zu gate predictors%s; model at %s\n", bundle.gates.size(),
              bundle.nbs_gates.empty() ? "" : " (plus next-best-step heads)",
              out_file.c_str());
  return 0;
}

int run_route(const SharedFlags& flags, const std::string& data_file,
              const std::string& model_file, const std::string& mode_name, double lambda,
              double threshold, const std::string& fixed_key, const std::string& split,
              const std::string& out_file) {
  ExperimentConfig cfg = resolve_config(flags);
  const ModelBundle bundle = load_model(model_file);
  if (topology_hash(bundle.topology) != topology_hash(cfg.topology)) {
    throw SchemaError("route: model topology does not match the config topology");
  }
  const SplitDataset dataset =
      load_dataset(data_file, bundle.topology, bundle.full_paths);
  const std::span<const SampleRecord> records = pick_split(dataset, split);
  const PolicyMode mode = parse_policy_mode(mode_name);

  RoutingPolicy policy;
  policy.mode = mode;
  policy.lambda = lambda;
  policy.threshold = threshold;
  policy.gate1_bits = cfg.gate1_bits;

  std::vector<DecisionTrace> traces;
  traces.reserve(records.size());
  for (const SampleRecord& record : records) {
    switch (mode) {
      case PolicyMode::quee:
        traces.push_back(
            route_sample(record, bundle.gates, bundle.used_paths, bundle.topology, policy));
        break;
      case PolicyMode::oracle:
        traces.push_back(route_oracle(record, bundle.used_paths, bundle.topology, lambda));
        break;
      case PolicyMode::threshold_exit:
        traces.push_back(
            route_threshold(record, bundle.full_paths, bundle.topology, threshold));
        break;
      case PolicyMode::fixed_path:
        traces.push_back(route_fixed(record, Path::from_key(fixed_key), bundle.topology));
        break;
      case PolicyMode::next_best_step:
        if (bundle.nbs_gates.empty()) {
          throw std::invalid_argument(
              "route: the model has no next-best-step heads; train with "
              "--mode next-best-step first");
        }
        traces.push_back(route_next_best_step(record, bundle.nbs_gates, bundle.used_paths,
                                              bundle.topology, cfg.gate1_bits));
        break;
    }
  }
  save_traces(traces, out_file);
  const OperatingPoint point = summarize_traces(traces, lambda);
  std::printf("routed %zu records (%s, %s): accuracy %.4f +/- %.4f, cost %.4f +/- %.4f\n",
              traces.size(), split.c_str(), mode_name.c_str(), point.accuracy,
              point.accuracy_half_width, point.cost, point.cost_half_width);
  return 0;
}

int run_eval(const std::string& traces_file, std::optional<double> lambda,
             const std::string& out_file) {
  const std::vector<DecisionTrace> traces = load_traces(traces_file);
  if (traces.empty()) throw std::invalid_argument("eval: no traces in " + traces_file);
  const OperatingPoint point = summarize_traces(traces, lambda.value_or(0.0));
  if (!out_file.empty()) {
    write_point_file(point, lambda.value_or(0.0), lambda.has_value(), traces.size(), out_file);
  }
  std::printf("%zu traces: accuracy %.4f +/- %.4f, cost %.4f +/- %.4f", traces.size(),
              point.accuracy, point.accuracy_half_width, point.cost, point.cost_half_width);
  if (lambda) {
    std::printf(", mean loss at lambda %.4g: %.4f", *lambda,
                mean_scalarized_loss(traces, *lambda));
  }
  std::printf("\n");
  return 0;
}

int run_sweep_cmd(const SharedFlags& flags, const std::string& data_file,
                  const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!data_file.empty()) cfg.dataset_file = data_file;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const PipelineOutput out = run_pipeline(cfg);
  std::printf("sweep complete: %zu quee points, %zu threshold points, %zu fixed paths -> %s\n",
              out.sweep.quee.points.size(), out.sweep.threshold.points.size(),
              out.sweep.fixed.size(), cfg.output_dir.c_str());
  return 0;
}

int run_ece_study(const SharedFlags& flags, const std::string& data_file,
                  const std::string& k_list, bool with_curves, const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!data_file.empty()) cfg.dataset_file = data_file;
  std::vector<int> ks;
  for (double v : parse_list(k_list)) ks.push_back(static_cast<int>(v));
  if (ks.empty()) throw std::invalid_argument("ece-study: empty --k-list");

  const PipelineArtifacts a = run_training(cfg);
  const auto entries = ece_study(a, ks, with_curves);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "ece_vs_k.tsv");
    out << "k\toverall_ece\n";
    for (const auto& e : entries) {
      out << e.k << '\t' << format_double(e.ece.overall) << '\n';
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / "ece_per_path.tsv");
    out << "k\tpath\tece\n";
    for (const auto& e : entries) {
      for (const auto& [path, value] : e.ece.per_path) {
        out << e.k << '\t' << path << '\t' << format_double(value) << '\n';
      }
    }
  }
  if (with_curves) {
    for (const auto& e : entries) {
      write_curve_file(e.curve, "lambda",
                       (fs::path(out_dir) / ("ece_curve_k" + std::to_string(e.k) + ".tsv"))
                           .string());
    }
  }
  for (const auto& e : entries) {
    std::printf("K=%-3d overall ECE %.5f\n", e.k, e.ece.overall);
  }
  return 0;
}

int run_degrade(const SharedFlags& flags, const std::string& data_file,
                const std::string& noise_list, const std::string& out_dir) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!data_file.empty()) cfg.dataset_file = data_file;
  const std::vector<double> levels = parse_list(noise_list);
  if (levels.empty()) throw std::invalid_argument("degrade: empty --noise list");

  const PipelineArtifacts a = run_training(cfg);
  const auto entries = degradation_study(a, levels);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "degrade_rmse.tsv");
    out << "sigma\toverall_rmse";
    for (const auto& [gate, value] : entries.front().rmse.per_gate) {
      out << "\trmse_gate" << gate;
    }
    out << "\n";
    for (const auto& e : entries) {
      out << format_double(e.sigma) << '\t' << format_double(e.rmse.overall);
      for (const auto& [gate, value] : e.rmse.per_gate) out << '\t' << format_double(value);
      out << "\n";
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    write_curve_file(entries[i].curve, "lambda",
                     (fs::path(out_dir) / ("degrade_curve_" + std::to_string(i) + ".tsv"))
                         .string());
    std::printf("sigma %.3f: RMSE %.4f\n", entries[i].sigma, entries[i].rmse.overall);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"budgeted quantization/early-exit routing experiments"};
  app.require_subcommand(1);

  SharedFlags flags;
  std::string data_file, model_file, out_path, mode = "quee", split = "test";
  std::string fixed_key, k_list = "1,5,20,50", noise_list = "0,0.1,0.3", traces_file;
  double lambda = 1.0, threshold = 0.5;
  std::optional<double> eval_lambda;
  bool with_curves = false;

  CLI::App* gen = app.add_subcommand("gen", "synthesize a dataset file");
  add_shared(gen, flags);
  gen->add_option("--out", out_path, "output dataset file")->required();

  CLI::App* cluster = app.add_subcommand("cluster", "fit the per-path error clusters");
  add_shared(cluster, flags);
  cluster->add_option("--data", data_file, "dataset file (default: synthesize)");
  cluster->add_option("--out", out_path, "output model file")->required();

  CLI::App* train = app.add_subcommand("train", "train the gate predictors");
  add_shared(train, flags);
  train->add_option("--data", data_file, "dataset file (default: synthesize)");
  train->add_option("--mode", mode, "quee (default) or next-best-step");
  train->add_option("--lambda", lambda, "trade-off baked into next-best-step targets");
  train->add_option("--out", out_path, "output model file")->required();

  CLI::App* route = app.add_subcommand("route", "route a dataset split");
  add_shared(route, flags);
  route->add_option("--data", data_file, "dataset file")->required();
  route->add_option("--model", model_file, "model file")->required();
  route->add_option("--mode", mode, "quee|next-best-step|oracle|threshold-exit|fixed-path");
  route->add_option("--lambda", lambda, "cost importance (quee/oracle)");
  route->add_option("--threshold", threshold, "exit threshold (threshold-exit)");
  route->add_option("--path", fixed_key, "path key (fixed-path)");
  route->add_option("--split", split, "train|validation|test (default test)");
  route->add_option("--out", out_path, "output trace file")->required();

  CLI::App* eval = app.add_subcommand("eval", "summarize a trace file");
  eval->add_option("--traces", traces_file, "trace file")->required();
  eval->add_option("--lambda", eval_lambda, "also report the scalarized loss");
  eval->add_option("--out", out_path, "optional TSV summary file");

  CLI::App* sweep = app.add_subcommand("sweep", "full pipeline and curve files");
  add_shared(sweep, flags);
  sweep->add_option("--data", data_file, "dataset file (default: synthesize)");
  sweep->add_option("--out", out_path, "output directory (default from config)");

  CLI::App* ece = app.add_subcommand("ece-study", "calibration error vs cluster count");
  add_shared(ece, flags);
  ece->add_option("--data", data_file, "dataset file (default: synthesize)");
  ece->add_option("--k-list", k_list, "comma-separated cluster counts");
  ece->add_flag("--curves", with_curves, "also retrain and sweep a curve per K");
  ece->add_option("--out", out_path, "output directory")->required();

  CLI::App* degrade = app.add_subcommand("degrade", "target-noise degradation study");
  add_shared(degrade, flags);
  degrade->add_option("--data", data_file, "dataset file (default: synthesize)");
  degrade->add_option("--noise", noise_list, "comma-separated noise levels");
  degrade->add_option("--out", out_path, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(flags, out_path);
    if (cluster->parsed()) return run_cluster(flags, data_file, out_path);
    if (train->parsed()) return run_train(flags, data_file, mode, lambda, out_path);
    if (route->parsed()) {
      return run_route(flags, data_file, model_file, mode, lambda, threshold, fixed_key,
                       split, out_path);
    }
    if (eval->parsed()) return run_eval(traces_file, eval_lambda, out_path);
    if (sweep->parsed()) return run_sweep_cmd(flags, data_file, out_path);
    if (ece->parsed()) return run_ece_study(flags, data_file, k_list, with_curves, out_path);
    if (degrade->parsed()) return run_degrade(flags, data_file, noise_list, out_path);
  } catch (const PipelineError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n",
                 app.get_subcommands().front()->get_name().c_str(), e.what());
    return 1;
  }
  return 0;
}
