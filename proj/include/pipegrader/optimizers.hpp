#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pipegrader/evaluator.hpp"
#include "pipegrader/pipeline_model.hpp"

namespace pipegrader {

enum class Termination { kBudget, kConvergence, kExhaustion };
enum class OptimizerKind { kGrid, kRandom, kSmbo };

std::string_view to_string(Termination t);
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

struct SearchBudget {
  /// Unset means "the whole grid".
  std::optional<std::size_t> max_trials;
  /// Stop once the best loss has not improved for this many trials. Unset
  /// disables the convergence rule.
  std::optional<std::size_t> patience = 50;
};

struct SmboOptions {
  std::size_t initial_trials = 10;
  std::size_t trees = 10;
  std::size_t candidates = 500;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
};

struct SearchResult {
  OptimizerKind optimizer = OptimizerKind::kGrid;
  std::string best_key;
  double best_loss = 0.0;
  std::vector<std::string> trial_sequence;
  Termination terminated_by = Termination::kExhaustion;
};

/// Evaluates every configuration under the restriction. Ties on loss go to
/// the lexicographically smaller key.
SearchResult grid_search(const PipelineSpec& spec, const Restriction& restriction,
                         Evaluator& evaluator, int jobs = 1);

/// Uniform sampling without replacement from the enumerated grid.
SearchResult random_search(const PipelineSpec& spec, const Restriction& restriction,
                           Evaluator& evaluator, const SearchBudget& budget,
                           std::uint64_t seed);

/// Random-forest surrogate with expected improvement. The initial trials are
/// the same as the first trials random_search would make with this seed.
SearchResult smbo_search(const PipelineSpec& spec, const Restriction& restriction,
                         Evaluator& evaluator, const SearchBudget& budget,
                         std::uint64_t seed, const SmboOptions& options = {});

SearchResult run_search(OptimizerKind kind, const PipelineSpec& spec,
                        const Restriction& restriction, Evaluator& evaluator,
                        const SearchBudget& budget, std::uint64_t seed,
                        int jobs = 1, const SmboOptions& options = {});

/// One slot per step (index of the chosen algorithm within its step) followed
/// by one slot per hyperparameter of the spec (domain index, or -1 when the
/// owning algorithm is not chosen).
std::vector<double> encode_config(const Configuration& config,
                                  const PipelineSpec& spec);
std::size_t encoding_width(const PipelineSpec& spec);

/// Expected improvement below `incumbent` for a Gaussian with the given
/// mean and standard deviation; max(0, incumbent - mean) when sd is 0.
double expected_improvement(double incumbent, double mean, double sd);

}  // namespace pipegrader
