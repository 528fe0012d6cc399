#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quee/dataset.hpp"
#include "quee/discretizer.hpp"
#include "quee/errors.hpp"
#include "quee/harness.hpp"
#include "quee/model_io.hpp"
#include "quee/path_space.hpp"
#include "quee/predictor.hpp"
#include "quee/router.hpp"
#include "quee/rng.hpp"

namespace py = pybind11;
using namespace quee;

namespace {

void define_path_space(py::module_& m) {
  py::class_<NetworkTopology>(m, "NetworkTopology")
      .def(py::init([](std::vector<double> block_flops, std::vector<int> bit_widths) {
             NetworkTopology t;
             t.block_flops = std::move(block_flops);
             t.bit_widths = std::move(bit_widths);
             t.validate();
             return t;
           }),
           py::arg("block_flops"), py::arg("bit_widths"))
      .def_readonly("block_flops", &NetworkTopology::block_flops)
      .def_readonly("bit_widths", &NetworkTopology::bit_widths)
      .def_property_readonly("num_exits", &NetworkTopology::num_exits)
      .def_property_readonly("max_bits", &NetworkTopology::max_bits)
      .def("__repr__", [](const NetworkTopology& t) {
        return "NetworkTopology(E=" + std::to_string(t.num_exits()) +
               ", B=" + std::to_string(t.num_levels()) + ")";
      });

  py::class_<Path>(m, "Path")
      .def(py::init([](std::vector<int> bits) { return Path{std::move(bits)}; }),
           py::arg("bits"))
      .def_static("from_key", &Path::from_key, py::arg("key"))
      .def_readonly("bits", &Path::bits)
      .def_property_readonly("depth", &Path::depth)
      .def("key", &Path::key)
      .def("__eq__", [](const Path& a, const Path& b) { return a == b; })
      .def("__hash__", [](const Path& p) { return py::hash(py::str(p.key())); })
      .def("__repr__", [](const Path& p) { return "Path('" + p.key() + "')"; });

  py::class_<PathSet>(m, "PathSet")
      .def(py::init<>())
      .def_readonly("paths", &PathSet::paths)
      .def("__len__", &PathSet::size)
      .def("contains", &PathSet::contains)
      .def("keys", [](const PathSet& s) {
        std::vector<std::string> out;
        for (const Path& p : s.paths) out.push_back(p.key());
        return out;
      });

  m.def("enumerate_paths", &enumerate_paths, py::arg("topology"));
  m.def("filter_monotone", &filter_monotone, py::arg("paths"));
  m.def("sample_paths", &sample_paths, py::arg("paths"), py::arg("cap"), py::arg("seed"));
  m.def("path_cost", &path_cost, py::arg("path"), py::arg("topology"));
  m.def("continuations", &continuations, py::arg("prefix"), py::arg("paths"));
  m.def("topology_hash", &topology_hash, py::arg("topology"));
  m.def("load_topology_config", &load_topology_config, py::arg("file"));
  py::class_<TopologyConfig>(m, "TopologyConfig")
      .def_readonly("topology", &TopologyConfig::topology)
      .def_readonly("path_cap", &TopologyConfig::path_cap)
      .def_readonly("seed", &TopologyConfig::seed);
}

void define_dataset(py::module_& m) {
  py::class_<SampleRecord>(m, "SampleRecord")
      .def(py::init<>())
      .def_readwrite("id", &SampleRecord::id)
      .def_readwrite("label", &SampleRecord::label)
      .def_readwrite("probs", &SampleRecord::probs)
      .def("probs_for", &SampleRecord::probs_for, py::arg("path_key"));

  py::class_<SplitDataset>(m, "SplitDataset")
      .def_readonly("num_classes", &SplitDataset::num_classes)
      .def_readonly("path_keys", &SplitDataset::path_keys)
      .def_readonly("train", &SplitDataset::train)
      .def_readonly("validation", &SplitDataset::validation)
      .def_readonly("test", &SplitDataset::test);

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("num_classes", &SyntheticConfig::num_classes)
      .def_readwrite("num_samples", &SyntheticConfig::num_samples)
      .def_readwrite("train_fraction", &SyntheticConfig::train_fraction)
      .def_readwrite("validation_fraction", &SyntheticConfig::validation_fraction)
      .def_readwrite("test_fraction", &SyntheticConfig::test_fraction)
      .def_readwrite("seed", &SyntheticConfig::seed)
      .def_readwrite("exit_gain", &SyntheticConfig::exit_gain)
      .def_readwrite("bit_gain", &SyntheticConfig::bit_gain)
      .def_readwrite("bit_sensitivity_spread", &SyntheticConfig::bit_sensitivity_spread)
      .def_readwrite("noise_scale", &SyntheticConfig::noise_scale)
      .def_readwrite("sharpness", &SyntheticConfig::sharpness)
      .def_readwrite("test_difficulty_shift", &SyntheticConfig::test_difficulty_shift);

  m.def("generate_synthetic", &generate_synthetic, py::arg("config"), py::arg("topology"),
        py::arg("paths"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("file"));
  m.def("load_dataset", &load_dataset, py::arg("file"), py::arg("topology"), py::arg("paths"));
  m.def(
      "empirical_accuracy",
      [](const std::vector<SampleRecord>& records, const Path& path) {
        return empirical_accuracy(records, path);
      },
      py::arg("records"), py::arg("path"));
}

void define_discretizer(py::module_& m) {
  py::class_<PathClusterModel>(m, "PathClusterModel")
      .def_readonly("path_key", &PathClusterModel::path_key)
      .def_readonly("centroids", &PathClusterModel::centroids)
      .def_readonly("delegates", &PathClusterModel::delegates)
      .def_readonly("member_counts", &PathClusterModel::member_counts)
      .def_readonly("fallback_delegate", &PathClusterModel::fallback_delegate);

  py::class_<DiscretizerModel>(m, "DiscretizerModel")
      .def_readonly("k", &DiscretizerModel::k)
      .def_readonly("seed", &DiscretizerModel::seed)
      .def_readonly("paths", &DiscretizerModel::paths)
      .def("for_path", &DiscretizerModel::for_path, py::arg("path_key"),
           py::return_value_policy::reference_internal);

  py::class_<KMeansResult>(m, "KMeansResult")
      .def_readonly("centroids", &KMeansResult::centroids)
      .def_readonly("assignment", &KMeansResult::assignment)
      .def_readonly("inertia", &KMeansResult::inertia)
      .def_readonly("inertia_trace", &KMeansResult::inertia_trace);

  m.def("kmeans", &kmeans, py::arg("points"), py::arg("k"), py::arg("seed"),
        py::arg("restarts") = 10, py::arg("max_iterations") = 300,
        py::arg("tolerance") = 1e-6);
  m.def(
      "fit_discretizer",
      [](const std::vector<SampleRecord>& records, const PathSet& paths, int k,
         std::uint64_t seed) { return fit_discretizer(records, paths, k, seed); },
      py::arg("records"), py::arg("paths"), py::arg("k"), py::arg("seed"));
  m.def(
      "assign_target",
      [](const DiscretizerModel& model, const Path& path, const std::vector<double>& probs) {
        return assign_target(model, path, probs);
      },
      py::arg("model"), py::arg("path"), py::arg("probs"));

  py::class_<EceReport>(m, "EceReport")
      .def_readonly("overall", &EceReport::overall)
      .def_readonly("per_path", &EceReport::per_path);
  m.def(
      "compute_ece",
      [](const DiscretizerModel& model, const std::vector<SampleRecord>& records,
         const PathSet& paths, int bins) { return compute_ece(model, records, paths, bins); },
      py::arg("model"), py::arg("records"), py::arg("paths"), py::arg("num_bins") = 15);
}

void define_predictor(py::module_& m) {
  py::class_<GateFeatures>(m, "GateFeatures").def_readonly("u", &GateFeatures::u);
  py::class_<PathEncoding>(m, "PathEncoding").def_readonly("p", &PathEncoding::p);

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("probs"));
  m.def(
      "build_features",
      [](const std::vector<double>& current, const std::vector<double>& previous,
         int num_classes) { return build_features(current, previous, num_classes); },
      py::arg("current"), py::arg("previous"), py::arg("num_classes"));
  m.def("encode_path", &encode_path, py::arg("path"), py::arg("num_exits"));

  py::class_<GatePredictor>(m, "GatePredictor")
      .def_readonly("gate", &GatePredictor::gate)
      .def_readonly("sigmoid_output", &GatePredictor::sigmoid_output)
      .def_readonly("hidden_dim", &GatePredictor::hidden_dim)
      .def(
          "predict",
          [](const GatePredictor& p, const std::vector<double>& features,
             const std::vector<double>& encoding) { return p.predict(features, encoding); },
          py::arg("features"), py::arg("encoding"));
  m.def("predict_pe", &predict_pe, py::arg("predictor"), py::arg("features"),
        py::arg("encoding"));

  py::class_<TrainingRow>(m, "TrainingRow")
      .def(py::init<>())
      .def_readwrite("gate", &TrainingRow::gate)
      .def_readwrite("features", &TrainingRow::features)
      .def_readwrite("encoding", &TrainingRow::encoding)
      .def_readwrite("target", &TrainingRow::target);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
      .def_readwrite("path_embedding_dim", &TrainConfig::path_embedding_dim)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("sigmoid_output", &TrainConfig::sigmoid_output);

  m.def(
      "build_training_rows",
      [](const std::vector<SampleRecord>& records, const PathSet& paths,
         const DiscretizerModel& model, const NetworkTopology& topology, std::uint64_t seed,
         int prefixes_per_gate, int candidates_per_prefix) {
        return build_training_rows(records, paths, model, topology, seed, prefixes_per_gate,
                                   candidates_per_prefix);
      },
      py::arg("records"), py::arg("paths"), py::arg("discretizer"), py::arg("topology"),
      py::arg("seed"), py::arg("prefixes_per_gate") = 2, py::arg("candidates_per_prefix") = 0);
  m.def(
      "train_gate",
      [](const std::vector<TrainingRow>& rows, const std::vector<TrainingRow>& validation,
         const TrainConfig& config, std::uint64_t seed) {
        return train_gate(rows, validation, config, seed);
      },
      py::arg("rows"), py::arg("validation_rows"), py::arg("config"), py::arg("seed"));
  m.def(
      "mean_squared_error",
      [](const GatePredictor& p, const std::vector<TrainingRow>& rows) {
        return mean_squared_error(p, rows);
      },
      py::arg("predictor"), py::arg("rows"));
}

void define_router(py::module_& m) {
  py::enum_<PolicyMode>(m, "PolicyMode")
      .value("quee", PolicyMode::quee)
      .value("next_best_step", PolicyMode::next_best_step)
      .value("oracle", PolicyMode::oracle)
      .value("threshold_exit", PolicyMode::threshold_exit)
      .value("fixed_path", PolicyMode::fixed_path);

  py::class_<RoutingPolicy>(m, "RoutingPolicy")
      .def(py::init<>())
      .def_readwrite("mode", &RoutingPolicy::mode)
      .def_readwrite("lambda_", &RoutingPolicy::lambda)
      .def_readwrite("threshold", &RoutingPolicy::threshold)
      .def_readwrite("fixed", &RoutingPolicy::fixed)
      .def_readwrite("gate1_bits", &RoutingPolicy::gate1_bits);

  py::class_<GateDecision>(m, "GateDecision")
      .def_readonly("gate", &GateDecision::gate)
      .def_readonly("candidates", &GateDecision::candidates)
      .def_readonly("chosen", &GateDecision::chosen);

  py::class_<DecisionTrace>(m, "DecisionTrace")
      .def_readonly("sample_id", &DecisionTrace::sample_id)
      .def_readonly("decisions", &DecisionTrace::decisions)
      .def_readonly("final_path", &DecisionTrace::final_path)
      .def_readonly("predicted_class", &DecisionTrace::predicted_class)
      .def_readonly("label", &DecisionTrace::label)
      .def_readonly("cost", &DecisionTrace::cost)
      .def_readonly("correct", &DecisionTrace::correct);

  m.def(
      "route_sample",
      [](const SampleRecord& record, const std::vector<GatePredictor>& gates,
         const PathSet& paths, const NetworkTopology& topology, const RoutingPolicy& policy) {
        return route_sample(record, gates, paths, topology, policy);
      },
      py::arg("record"), py::arg("gates"), py::arg("paths"), py::arg("topology"),
      py::arg("policy"));
  m.def("route_oracle", &route_oracle, py::arg("record"), py::arg("paths"),
        py::arg("topology"), py::arg("lambda_"));
  m.def("route_threshold", &route_threshold, py::arg("record"), py::arg("paths"),
        py::arg("topology"), py::arg("threshold"));
  m.def("route_fixed", &route_fixed, py::arg("record"), py::arg("path"), py::arg("topology"));
  m.def(
      "route_next_best_step",
      [](const SampleRecord& record, const std::vector<GatePredictor>& gates,
         const PathSet& paths, const NetworkTopology& topology, int gate1_bits) {
        return route_next_best_step(record, gates, paths, topology, gate1_bits);
      },
      py::arg("record"), py::arg("gates"), py::arg("paths"), py::arg("topology"),
      py::arg("gate1_bits") = 0);
  m.def(
      "save_traces",
      [](const std::vector<DecisionTrace>& traces, const std::string& file) {
        save_traces(traces, file);
      },
      py::arg("traces"), py::arg("file"));
  m.def("load_traces", &load_traces, py::arg("file"));
}

void define_harness(py::module_& m) {
  py::class_<BootstrapStats>(m, "BootstrapStats")
      .def_readonly("mean", &BootstrapStats::mean)
      .def_readonly("half_width", &BootstrapStats::half_width);
  m.def(
      "bootstrap_ci",
      [](const std::vector<double>& outcomes, int splits) {
        return bootstrap_ci(outcomes, splits);
      },
      py::arg("outcomes"), py::arg("num_splits") = 10);

  py::class_<OperatingPoint>(m, "OperatingPoint")
      .def_readonly("parameter", &OperatingPoint::parameter)
      .def_readonly("label", &OperatingPoint::label)
      .def_readonly("accuracy", &OperatingPoint::accuracy)
      .def_readonly("accuracy_half_width", &OperatingPoint::accuracy_half_width)
      .def_readonly("cost", &OperatingPoint::cost)
      .def_readonly("cost_half_width", &OperatingPoint::cost_half_width);

  py::class_<Curve>(m, "Curve")
      .def_readonly("name", &Curve::name)
      .def_readonly("points", &Curve::points);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init(&ExperimentConfig::defaults))
      .def_static("defaults", &ExperimentConfig::defaults)
      .def_static("from_file", &ExperimentConfig::from_file, py::arg("file"))
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_readwrite("topology", &ExperimentConfig::topology)
      .def_readwrite("path_cap", &ExperimentConfig::path_cap)
      .def_readwrite("dataset_file", &ExperimentConfig::dataset_file)
      .def_readwrite("synthetic", &ExperimentConfig::synthetic)
      .def_readwrite("clusters", &ExperimentConfig::clusters)
      .def_readwrite("training", &ExperimentConfig::training)
      .def_readwrite("prefixes_per_gate", &ExperimentConfig::prefixes_per_gate)
      .def_readwrite("candidates_per_prefix", &ExperimentConfig::candidates_per_prefix)
      .def_readwrite("gate1_bits", &ExperimentConfig::gate1_bits)
      .def_readwrite("lambdas", &ExperimentConfig::lambdas)
      .def_readwrite("thresholds", &ExperimentConfig::thresholds);

  py::class_<PipelineArtifacts>(m, "PipelineArtifacts")
      .def_readonly("config", &PipelineArtifacts::config)
      .def_readonly("full_paths", &PipelineArtifacts::full_paths)
      .def_readonly("used_paths", &PipelineArtifacts::used_paths)
      .def_readonly("dataset", &PipelineArtifacts::dataset)
      .def_readonly("discretizer", &PipelineArtifacts::discretizer)
      .def_readonly("gates", &PipelineArtifacts::gates);

  py::class_<SweepResult>(m, "SweepResult")
      .def_readonly("quee", &SweepResult::quee)
      .def_readonly("oracle", &SweepResult::oracle)
      .def_readonly("threshold", &SweepResult::threshold)
      .def_readonly("fixed", &SweepResult::fixed);

  py::class_<PipelineOutput>(m, "PipelineOutput")
      .def_readonly("artifacts", &PipelineOutput::artifacts)
      .def_readonly("sweep", &PipelineOutput::sweep);

  py::class_<RmseReport>(m, "RmseReport")
      .def_readonly("per_gate", &RmseReport::per_gate)
      .def_readonly("overall", &RmseReport::overall);

  py::class_<DegradationEntry>(m, "DegradationEntry")
      .def_readonly("sigma", &DegradationEntry::sigma)
      .def_readonly("rmse", &DegradationEntry::rmse)
      .def_readonly("curve", &DegradationEntry::curve);

  py::class_<EceStudyEntry>(m, "EceStudyEntry")
      .def_readonly("k", &EceStudyEntry::k)
      .def_readonly("ece", &EceStudyEntry::ece)
      .def_readonly("curve", &EceStudyEntry::curve);

  m.def("run_training", &run_training, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_clustering", &run_clustering, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_sweep", &run_sweep, py::arg("artifacts"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_pipeline", &run_pipeline, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("route_test_quee", &route_test_quee, py::arg("artifacts"), py::arg("lambda_"));
  m.def("route_test_oracle", &route_test_oracle, py::arg("artifacts"), py::arg("lambda_"));
  m.def("route_test_threshold", &route_test_threshold, py::arg("artifacts"),
        py::arg("threshold"));
  m.def("route_test_fixed", &route_test_fixed, py::arg("artifacts"), py::arg("path"));
  m.def(
      "summarize_traces",
      [](const std::vector<DecisionTrace>& traces, double parameter) {
        return summarize_traces(traces, parameter);
      },
      py::arg("traces"), py::arg("parameter") = 0.0);
  m.def(
      "mean_scalarized_loss",
      [](const std::vector<DecisionTrace>& traces, double lambda) {
        return mean_scalarized_loss(traces, lambda);
      },
      py::arg("traces"), py::arg("lambda_"));
  m.def("predictor_rmse",
        py::overload_cast<const PipelineArtifacts&>(&predictor_rmse), py::arg("artifacts"));
  m.def(
      "degradation_study",
      [](const PipelineArtifacts& artifacts, const std::vector<double>& levels) {
        return degradation_study(artifacts, levels);
      },
      py::arg("artifacts"), py::arg("noise_levels"),
      py::call_guard<py::gil_scoped_release>());
  m.def("ece_study", &ece_study, py::arg("artifacts"), py::arg("ks"),
        py::arg("with_curves") = false, py::call_guard<py::gil_scoped_release>());
  m.def("train_nbs_gates", &train_nbs_gates, py::arg("artifacts"), py::arg("lambda_"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "route_test_nbs",
      [](const PipelineArtifacts& artifacts, const std::vector<GatePredictor>& gates) {
        return route_test_nbs(artifacts, gates);
      },
      py::arg("artifacts"), py::arg("nbs_gates"));

  py::class_<ModelBundle>(m, "ModelBundle")
      .def_readonly("topology", &ModelBundle::topology)
      .def_readonly("num_classes", &ModelBundle::num_classes)
      .def_readonly("full_paths", &ModelBundle::full_paths)
      .def_readonly("used_paths", &ModelBundle::used_paths)
      .def_readonly("discretizer", &ModelBundle::discretizer)
      .def_readonly("gates", &ModelBundle::gates)
      .def_readonly("nbs_gates", &ModelBundle::nbs_gates)
      .def_readonly("nbs_lambda", &ModelBundle::nbs_lambda);
  m.def("save_model", &save_model, py::arg("bundle"), py::arg("file"));
  m.def("load_model", &load_model, py::arg("file"));
  m.def(
      "to_bundle", [](const PipelineArtifacts& a) { return a.to_bundle(); },
      py::arg("artifacts"));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "budgeted quantization/early-exit routing: path algebra, clustered error "
            "targets, gate predictors, and routing policies";

  py::register_exception<SchemaError>(m, "SchemaError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<PipelineError>(m, "PipelineError");

  define_path_space(m);
  define_dataset(m);
  define_discretizer(m);
  define_predictor(m);
  define_router(m);
  define_harness(m);
}
