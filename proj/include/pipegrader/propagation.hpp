#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pipegrader/attribution.hpp"
#include "pipegrader/evaluator.hpp"
#include "pipegrader/optimizers.hpp"
#include "pipegrader/pipeline_model.hpp"

namespace pipegrader {

/// The pipeline lacks a naive benchmark algorithm for some step.
class MissingNaiveError : public SpecError {
 public:
  using SpecError::SpecError;
};

/// Throws MissingNaiveError naming the first step without a naive algorithm.
void require_naive_algorithms(const PipelineSpec& spec);

struct NaiveErrorSextuple {
  std::string component;
  Scope scope = Scope::kSteps;
  double e_opt_opt = 0.0;
  double e_agnostic_opt = 0.0;
  double e_naive_opt = 0.0;
  double e_opt_naive = 0.0;
  double e_naive_naive = 0.0;
  double e_agnostic_naive = 0.0;
  /// Cell coverage of the two agnostic averages.
  double coverage_opt = 1.0;
  double coverage_naive = 1.0;
};

enum PropagationFlag : unsigned {
  kLastStepConvention = 1u << 0,
  kDegenerateDenominator = 1u << 1,
  kNegativeGamma = 1u << 2,
  kModelViolation = 1u << 3,
};

std::vector<std::string> flag_names(unsigned flags);

struct PropagationResult {
  double delta_e1 = 0.0;
  double delta_e2 = 0.0;
  double delta_e3 = 0.0;
  std::optional<double> e_direct;
  std::optional<double> e_propagation;
  std::optional<double> gamma;
  unsigned flags = 0;
};

inline constexpr double kDefaultEpsilon = 1e-9;

PropagationResult solve_propagation(double delta_e1, double delta_e2, double delta_e3,
                                    double epsilon = kDefaultEpsilon);
PropagationResult solve_propagation(const NaiveErrorSextuple& s,
                                    double epsilon = kDefaultEpsilon);

/// How the current component and the downstream steps are treated in one
/// constrained search. Upstream steps are always optimised.
struct ConstrainedGrid {
  bool current_naive = false;
  bool downstream_naive = false;
};

/// Grid of one constrained search. For steps scope `path` is ignored and
/// non-naive means "any pipeline algorithm"; otherwise non-naive means the
/// path's own algorithm.
Restriction constrained_restriction(const PipelineSpec& spec, const ComponentRef& component,
                                    const PathId& path, ConstrainedGrid mode);

struct SextupleOptions {
  OptimizerKind optimizer = OptimizerKind::kGrid;
  SearchBudget budget;
  SmboOptions smbo;
  bool allow_partial = false;
  bool ensure_coverage = false;
  int jobs = 1;
  /// Shared across every constrained ledger so no configuration is
  /// computed twice. Optional.
  TrialLedger* cache = nullptr;
};

struct SextupleRun {
  NaiveErrorSextuple sextuple;
  /// Constrained ledgers and search results keyed by restriction key.
  std::map<std::string, TrialLedger> ledgers;
  std::map<std::string, SearchResult> searches;
};

SextupleRun compute_sextuple(const PipelineSpec& spec, const Objective& objective,
                             const ComponentRef& component, const PathId& path,
                             std::uint64_t seed, const SextupleOptions& options = {});

struct FieldSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;  // seeds with a defined value
};

struct PropagationEntry {
  std::string component;
  std::vector<NaiveErrorSextuple> per_seed_sextuples;
  std::vector<PropagationResult> per_seed_results;
  /// Field name -> summary across seeds (undefined values skipped).
  std::map<std::string, FieldSummary> summary;
  unsigned flags_any = 0;  // union over seeds
  unsigned flags_all = 0;  // intersection over seeds
};

struct PropagationReport {
  Scope scope = Scope::kSteps;
  PathId path;
  OptimizerKind estimator = OptimizerKind::kGrid;
  std::vector<std::uint64_t> seeds;
  double epsilon = kDefaultEpsilon;
  std::vector<PropagationEntry> entries;

  const PropagationEntry* find(std::string_view component) const;
};

/// Sextuple plus solve for every component and seed, aggregated per field.
PropagationReport propagation_report(const PipelineSpec& spec, const Objective& objective,
                                     const std::vector<ComponentRef>& components,
                                     const PathId& path,
                                     const std::vector<std::uint64_t>& seeds,
                                     const SextupleOptions& options = {},
                                     double epsilon = kDefaultEpsilon,
                                     std::map<std::string, TrialLedger>* ledgers = nullptr);

}  // namespace pipegrader
