#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pipegrader/evaluator.hpp"
#include "pipegrader/optimizers.hpp"
#include "pipegrader/pipeline_model.hpp"

namespace pipegrader {

/// A cell needed by a contribution has no trial in the ledger.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scope { kSteps, kAlgorithms, kHyperparameters };

std::string_view to_string(Scope scope);
Scope parse_scope(std::string_view text);

/// A step, an algorithm on a path, or a hyperparameter on a path.
struct ComponentRef {
  Scope scope = Scope::kSteps;
  std::size_t step = 0;
  std::string algorithm;       // empty for steps
  std::string hyperparameter;  // unqualified; only for hyperparameters

  /// Step name, algorithm id, or "<algorithm>.<hyperparameter>".
  std::string label(const PipelineSpec& spec) const;
};

std::vector<ComponentRef> step_components(const PipelineSpec& spec);
std::vector<ComponentRef> algorithm_components(const PipelineSpec& spec,
                                               const PathId& path);
/// `targets` are qualified names. Throws SpecError for a target not on the
/// path.
std::vector<ComponentRef> hyperparameter_components(
    const PipelineSpec& spec, const PathId& path,
    const std::vector<std::string>& targets);
/// First hyperparameter of every hyperparameter-bearing algorithm on the path.
std::vector<std::string> default_hyperparameter_targets(const PipelineSpec& spec,
                                                        const PathId& path);

/// Grid cells over which a component's agnostic average is taken: the
/// step's algorithms, the algorithm's full hyperparameter settings, or the
/// hyperparameter's values.
struct CellPartition {
  std::vector<std::string> cells;
  std::function<std::string(const Configuration&)> cell_of;
};

CellPartition cells_for(const PipelineSpec& spec, const ComponentRef& component);

/// Grid a component is attributed over: the non-naive pipeline for steps,
/// the path for algorithms and hyperparameters.
Restriction attribution_restriction(const PipelineSpec& spec, const ComponentRef& c,
                                    const PathId& path);

struct AttributionOptions {
  bool allow_partial = false;
  bool exclude_failed = false;
};

struct ContributionEntry {
  std::string component;
  double contribution = 0.0;  // NaN when no cell is covered
  std::map<std::string, double> cell_minima;
  std::vector<std::string> missing_cells;
  double coverage = 1.0;
  // Aggregates over seeds; a single report has mean = contribution, std = 0.
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_seed;
};

struct ContributionReport {
  Scope scope = Scope::kSteps;
  PathId path;
  OptimizerKind estimator = OptimizerKind::kGrid;
  double reference_min = 0.0;
  std::vector<double> per_seed_reference;
  std::size_t seeds = 1;
  std::vector<ContributionEntry> entries;

  const ContributionEntry* find(std::string_view component) const;
};

/// Mean over `partition` cells of the minimum loss among `records` in each
/// cell, minus `reference`. Uncovered cells throw CoverageError unless
/// allow_partial, in which case they are skipped and coverage drops.
ContributionEntry agnostic_entry(const std::vector<TrialRecord>& records,
                                 double reference, const std::string& label,
                                 const CellPartition& partition, bool allow_partial);

/// Minimum loss over records admitted by the restriction.
std::optional<double> restricted_minimum(const std::vector<TrialRecord>& records,
                                         const PipelineSpec& spec,
                                         const Restriction& restriction);

ContributionReport contribution_steps(const TrialLedger& ledger,
                                      const PipelineSpec& spec,
                                      const AttributionOptions& options = {});
ContributionReport contribution_algorithms(const TrialLedger& ledger,
                                           const PipelineSpec& spec,
                                           const PathId& path,
                                           const AttributionOptions& options = {});
ContributionReport contribution_hyperparameters(
    const TrialLedger& ledger, const PipelineSpec& spec, const PathId& path,
    const std::vector<std::string>& targets, const AttributionOptions& options = {});

/// Scope dispatch. `path` and `targets` are ignored for steps; empty targets
/// select the defaults.
ContributionReport contribution(Scope scope, const TrialLedger& ledger,
                                 const PipelineSpec& spec, const PathId& path,
                                 const std::vector<std::string>& targets,
                                 const AttributionOptions& options = {});

/// Per-component mean and sample standard deviation over seeds. A grid
/// estimator accepts exactly one report.
ContributionReport aggregate_over_seeds(const std::vector<ContributionReport>& reports);

/// For every component cell without a trial, evaluates one uniformly chosen
/// configuration of that cell (within `restriction`). Returns the number of
/// trials added.
std::size_t ensure_coverage(const PipelineSpec& spec, const Restriction& restriction,
                            const std::vector<ComponentRef>& components,
                            Evaluator& evaluator, std::uint64_t seed);

}  // namespace pipegrader
