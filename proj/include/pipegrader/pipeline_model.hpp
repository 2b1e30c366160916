#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pipegrader {

/// Raised when a pipeline document or a restriction does not satisfy the
/// pipeline schema.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HyperparameterKind { kInteger, kReal, kBoolean, kCategorical };

std::string_view to_string(HyperparameterKind kind);
HyperparameterKind parse_hyperparameter_kind(std::string_view text);

/// A finite, ordered set of admissible values. Values are kept as decimal
/// strings so that configuration keys never depend on float formatting.
struct HyperparameterDomain {
  std::string name;
  HyperparameterKind kind = HyperparameterKind::kCategorical;
  std::vector<std::string> values;

  std::size_t size() const { return values.size(); }
  std::optional<std::size_t> index_of(std::string_view value) const;
};

struct AlgorithmSpec {
  std::string id;
  std::size_t step_index = 0;
  std::vector<HyperparameterDomain> hyperparameters;
  bool is_naive = false;

  /// Number of distinct hyperparameter settings (1 for hyperparameter-free).
  std::size_t configuration_count() const;
  std::string qualified_name(const HyperparameterDomain& hp) const;
  const HyperparameterDomain* find_hyperparameter(std::string_view name) const;
};

struct Step {
  std::string name;
  std::vector<AlgorithmSpec> algorithms;

  const AlgorithmSpec* find(std::string_view id) const;
  const AlgorithmSpec* naive() const;
  std::vector<std::string> pipeline_ids() const;  // non-naive, spec order
};

/// One algorithm id per step, in step order.
using PathId = std::vector<std::string>;

std::string path_label(const PathId& path);
PathId parse_path(std::string_view comma_separated);

/// A complete grid cell. Assignment keys are qualified names
/// ("<algorithm>.<hyperparameter>").
struct Configuration {
  PathId path;
  std::map<std::string, std::string> assignments;

  bool operator==(const Configuration&) const = default;
};

std::string canonical_key(const Configuration& config);

class PipelineSpec {
 public:
  std::vector<Step> steps;
  std::string metric = "cross_entropy";
  int folds = 5;

  std::size_t num_steps() const { return steps.size(); }
  const AlgorithmSpec& algorithm(std::size_t step, std::string_view id) const;
  bool has_naive_everywhere() const;

  /// Throws SpecError if `config` is not a valid grid cell of this pipeline.
  void validate(const Configuration& config) const;

  /// Canonical JSON text; also the input of `fingerprint()`.
  std::string to_json() const;
  std::string fingerprint() const;
};

PipelineSpec load_spec(std::string_view document);
PipelineSpec load_spec_file(const std::string& path);

/// The Haralick/CNN -> PCA/ISOMAP -> RF/SVM image pipeline with one naive
/// benchmark algorithm per step.
std::string_view default_image_pipeline_document();
PipelineSpec default_image_pipeline();

/// Restricts a grid. An empty `allowed` entry for a step means "every
/// non-naive algorithm of that step". `fixed` pins qualified hyperparameters.
struct Restriction {
  std::vector<std::vector<std::string>> allowed;
  std::map<std::string, std::string> fixed;

  static Restriction cash(const PipelineSpec& spec);
  static Restriction on_path(const PathId& path);
  /// Every algorithm, naive ones included.
  static Restriction everything(const PipelineSpec& spec);

  std::string key() const;
  /// True if `config` is a cell of the restricted grid.
  bool admits(const PipelineSpec& spec, const Configuration& config) const;
};

std::vector<PathId> enumerate_paths(const PipelineSpec& spec,
                                    bool include_naive);
std::vector<Configuration> enumerate_grid(const PipelineSpec& spec,
                                          const Restriction& restriction);
std::vector<Configuration> enumerate_grid(const PipelineSpec& spec);
std::size_t grid_size(const PipelineSpec& spec, const Restriction& restriction);

/// Key of the configuration truncated to its first `length` steps. Used to
/// share intermediate outputs between configurations.
std::string prefix_key(const Configuration& config, std::size_t length,
                       const PipelineSpec& spec);

/// Path with the most hyperparameters; ties go to the earliest path in
/// enumeration order.
PathId default_analysis_path(const PipelineSpec& spec);

}  // namespace pipegrader
