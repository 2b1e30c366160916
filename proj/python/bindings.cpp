#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "pipegrader/attribution.hpp"
#include "pipegrader/datasets.hpp"
#include "pipegrader/evaluator.hpp"
#include "pipegrader/optimizers.hpp"
#include "pipegrader/pipeline_model.hpp"
#include "pipegrader/propagation.hpp"
#include "pipegrader/report.hpp"

namespace py = pybind11;
using namespace pipegrader;

namespace {

PipelineSpec spec_from(const std::optional<std::string>& document) {
  return document ? load_spec(*document) : default_image_pipeline();
}

Restriction restriction_for(const PipelineSpec& spec, const std::optional<std::string>& path,
                            bool include_naive) {
  if (path) return Restriction::on_path(parse_path(*path));
  return include_naive ? Restriction::everything(spec) : Restriction::cash(spec);
}

SearchBudget budget_from(std::size_t budget, std::size_t patience) {
  SearchBudget b;
  if (budget > 0) b.max_trials = budget;
  if (patience > 0) b.patience = patience;
  else b.patience.reset();
  return b;
}

std::vector<std::string> grid_keys(const std::optional<std::string>& spec_doc,
                                   const std::optional<std::string>& path, bool include_naive) {
  const auto spec = spec_from(spec_doc);
  std::vector<std::string> keys;
  for (const auto& c : enumerate_grid(spec, restriction_for(spec, path, include_naive))) {
    keys.push_back(canonical_key(c));
  }
  return keys;
}

std::size_t count_grid(const std::optional<std::string>& spec_doc,
                       const std::optional<std::string>& path, bool include_naive) {
  const auto spec = spec_from(spec_doc);
  return grid_size(spec, restriction_for(spec, path, include_naive));
}

std::string lookup_search(const std::map<std::string, double>& table,
                          const std::string& optimizer, const std::optional<std::string>& path,
                          std::size_t budget, std::size_t patience, std::uint64_t seed,
                          const std::optional<std::string>& spec_doc) {
  const auto spec = spec_from(spec_doc);
  LookupObjective objective(spec, table);
  TrialLedger ledger(objective.fingerprints());
  Evaluator evaluator(objective, ledger);
  const auto result = run_search(parse_optimizer(optimizer), spec,
                                 restriction_for(spec, path, false), evaluator,
                                 budget_from(budget, patience), seed);
  return to_json(result).dump();
}

std::string lookup_contributions(const std::map<std::string, double>& table,
                                 const std::string& scope_text, const std::string& optimizer,
                                 const std::optional<std::string>& path,
                                 const std::vector<std::string>& targets, std::size_t budget,
                                 std::size_t patience, const std::vector<std::uint64_t>& seeds,
                                 bool allow_partial, const std::optional<std::string>& spec_doc) {
  const auto spec = spec_from(spec_doc);
  const auto scope = parse_scope(scope_text);
  const auto kind = parse_optimizer(optimizer);
  const PathId path_id = path ? parse_path(*path) : default_analysis_path(spec);
  const auto restriction =
      scope == Scope::kSteps ? Restriction::cash(spec) : Restriction::on_path(path_id);
  LookupObjective objective(spec, table);
  AttributionOptions options;
  options.allow_partial = allow_partial;
  std::vector<ContributionReport> reports;
  const auto run_seeds = kind == OptimizerKind::kGrid ? std::vector<std::uint64_t>{0} : seeds;
  for (auto seed : run_seeds) {
    TrialLedger ledger(objective.fingerprints());
    Evaluator evaluator(objective, ledger);
    run_search(kind, spec, restriction, evaluator, budget_from(budget, patience), seed);
    reports.push_back(contribution(scope, ledger, spec, path_id, targets, options));
  }
  return to_json(aggregate_over_seeds(reports)).dump();
}

std::string lookup_propagation(const std::map<std::string, double>& table,
                               const std::string& scope_text, const std::string& optimizer,
                               const std::optional<std::string>& path,
                               const std::vector<std::string>& targets, std::size_t budget,
                               std::size_t patience, const std::vector<std::uint64_t>& seeds,
                               double epsilon, const std::optional<std::string>& spec_doc) {
  const auto spec = spec_from(spec_doc);
  require_naive_algorithms(spec);
  const auto scope = parse_scope(scope_text);
  const PathId path_id = path ? parse_path(*path) : default_analysis_path(spec);
  std::vector<ComponentRef> components;
  if (scope == Scope::kSteps) components = step_components(spec);
  else if (scope == Scope::kAlgorithms) components = algorithm_components(spec, path_id);
  else {
    components = hyperparameter_components(
        spec, path_id, targets.empty() ? default_hyperparameter_targets(spec, path_id) : targets);
  }
  LookupObjective objective(spec, table);
  SextupleOptions options;
  options.optimizer = parse_optimizer(optimizer);
  options.budget = budget_from(budget, patience);
  options.allow_partial = true;
  const auto run_seeds =
      options.optimizer == OptimizerKind::kGrid ? std::vector<std::uint64_t>{0} : seeds;
  return to_json(propagation_report(spec, objective, components, path_id, run_seeds, options,
                                    epsilon))
      .dump();
}

std::string solve(double d1, double d2, double d3, double epsilon) {
  return to_json(solve_propagation(d1, d2, d3, epsilon)).dump();
}

py::dict dataset(const std::string& preset, std::uint64_t seed) {
  const auto ds = generate_texture_dataset(preset, seed);
  const auto n = static_cast<py::ssize_t>(ds.size());
  const py::ssize_t h = ds.images.front().height, w = ds.images.front().width;
  py::array_t<double> images({n, h, w});
  auto view = images.mutable_unchecked<3>();
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& img = ds.images[static_cast<std::size_t>(i)];
    for (py::ssize_t r = 0; r < h; ++r)
      for (py::ssize_t c = 0; c < w; ++c) view(i, r, c) = img.at(static_cast<int>(r), static_cast<int>(c));
  }
  py::dict out;
  out["images"] = images;
  out["labels"] = ds.labels;
  out["class_names"] = ds.class_names;
  out["fingerprint"] = ds.fingerprint();
  return out;
}

std::string pipeline_search(const std::string& preset, std::uint64_t dataset_seed,
                            const std::string& path, const std::string& optimizer,
                            std::size_t budget, std::size_t patience, std::uint64_t seed,
                            int folds, int jobs) {
  const auto spec = default_image_pipeline();
  const auto data = generate_texture_dataset(preset, dataset_seed);
  PipelineObjectiveOptions options;
  options.seed = seed;
  PipelineObjective objective(spec, data, make_folds(data, folds, seed), options);
  TrialLedger ledger(objective.fingerprints());
  Evaluator evaluator(objective, ledger);
  const auto result = run_search(parse_optimizer(optimizer), spec,
                                 Restriction::on_path(parse_path(path)), evaluator,
                                 budget_from(budget, patience), seed, jobs);
  nlohmann::json out = to_json(result);
  out["ledger"] = nlohmann::json::array();
  for (const auto& r : ledger.records()) {
    out["ledger"].push_back({{"key", r.key}, {"mean_loss", r.mean_loss},
                             {"fold_losses", r.fold_losses}, {"failed", r.failed}});
  }
  out["prefix_cache_stats"] = objective.prefix_cache_stats();
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_pipegrader, m) {
  m.doc() = "Native core of pipegrader; the pipegrader package wraps these functions.";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<CoverageError>(m, "CoverageError", PyExc_RuntimeError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);

  m.def("default_spec", [] { return std::string(default_image_pipeline_document()); });
  m.def("grid_keys", &grid_keys, py::arg("spec") = py::none(), py::arg("path") = py::none(),
        py::arg("include_naive") = false);
  m.def("grid_size", &count_grid, py::arg("spec") = py::none(), py::arg("path") = py::none(),
        py::arg("include_naive") = false);
  m.def("lookup_search", &lookup_search, py::arg("table"), py::arg("optimizer") = "grid",
        py::arg("path") = py::none(), py::arg("budget") = 0, py::arg("patience") = 0,
        py::arg("seed") = 0, py::arg("spec") = py::none());
  m.def("lookup_contributions", &lookup_contributions, py::arg("table"),
        py::arg("scope") = "steps", py::arg("optimizer") = "grid", py::arg("path") = py::none(),
        py::arg("targets") = std::vector<std::string>{}, py::arg("budget") = 0,
        py::arg("patience") = 0, py::arg("seeds") = std::vector<std::uint64_t>{0},
        py::arg("allow_partial") = false, py::arg("spec") = py::none());
  m.def("lookup_propagation", &lookup_propagation, py::arg("table"),
        py::arg("scope") = "steps", py::arg("optimizer") = "grid", py::arg("path") = py::none(),
        py::arg("targets") = std::vector<std::string>{}, py::arg("budget") = 0,
        py::arg("patience") = 0, py::arg("seeds") = std::vector<std::uint64_t>{0},
        py::arg("epsilon") = kDefaultEpsilon, py::arg("spec") = py::none());
  m.def("solve_propagation", &solve, py::arg("delta_e1"), py::arg("delta_e2"),
        py::arg("delta_e3"), py::arg("epsilon") = kDefaultEpsilon);
  m.def("spearman", &spearman);
  m.def("dataset", &dataset, py::arg("preset"), py::arg("seed") = 0);
  m.def("pipeline_search", &pipeline_search, py::arg("preset") = "balanced-small",
        py::arg("dataset_seed") = 0, py::arg("path") = "cnn_frozen,pca,rf",
        py::arg("optimizer") = "random", py::arg("budget") = 10, py::arg("patience") = 0,
        py::arg("seed") = 0, py::arg("folds") = 5, py::arg("jobs") = 1);
  m.attr("__version__") = kToolVersion;
}
