#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pipegrader/evaluator.hpp"
#include "pipegrader/pipeline_model.hpp"

namespace pipegrader::testing {

/// Lookup table over the restricted grid; `loss` sees each configuration.
inline std::map<std::string, double> make_table(
    const PipelineSpec& spec, const Restriction& restriction,
    const std::function<double(const Configuration&)>& loss) {
  std::map<std::string, double> table;
  for (const auto& c : enumerate_grid(spec, restriction)) table[canonical_key(c)] = loss(c);
  return table;
}

inline std::map<std::string, double> make_table(
    const PipelineSpec& spec, const std::function<double(const Configuration&)>& loss) {
  return make_table(spec, Restriction::everything(spec), loss);
}

inline const std::string& value_of(const Configuration& c, const std::string& name) {
  return c.assignments.at(name);
}

inline double number_of(const Configuration& c, const std::string& name) {
  return std::stod(c.assignments.at(name));
}

/// Two-step pipeline with naive algorithms: step "first" {A, B, N1},
/// step "second" {L, N2}; no hyperparameters.
inline PipelineSpec two_step_spec() {
  return load_spec(R"({
    "metric": "cross_entropy", "folds": 5,
    "steps": [
      {"name": "first", "algorithms": [
        {"id": "A", "naive": false, "hyperparameters": []},
        {"id": "B", "naive": false, "hyperparameters": []},
        {"id": "N1", "naive": true, "hyperparameters": []}]},
      {"name": "second", "algorithms": [
        {"id": "L", "naive": false, "hyperparameters": []},
        {"id": "N2", "naive": true, "hyperparameters": []}]}
    ]})");
}

/// Index of a configuration's value within its domain (for bowl objectives).
inline double domain_index(const PipelineSpec& spec, const Configuration& c,
                           std::size_t step, const std::string& hp) {
  const auto& alg = spec.algorithm(step, c.path[step]);
  const auto* domain = alg.find_hyperparameter(hp);
  return static_cast<double>(*domain->index_of(c.assignments.at(alg.qualified_name(*domain))));
}

}  // namespace pipegrader::testing
