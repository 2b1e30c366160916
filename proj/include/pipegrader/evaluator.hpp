#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pipegrader/components.hpp"
#include "pipegrader/datasets.hpp"
#include "pipegrader/pipeline_model.hpp"

namespace pipegrader {

/// Raised for misuse that is not a component failure: a missing lookup key,
/// a fingerprint mismatch, conflicting ledger records.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrialRecord {
  std::string key;
  Configuration config;
  std::vector<double> fold_losses;
  double mean_loss = 0.0;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;

  /// Equality of everything except wall_time.
  bool same_result(const TrialRecord& other) const;
};

struct LedgerFingerprints {
  std::string spec;
  std::string dataset;
  std::string folds;

  bool operator==(const LedgerFingerprints&) const = default;
};

/// Append-only store of trial records. Thread-safe; the first insert of a
/// key wins and later inserts of the same key are ignored.
class TrialLedger {
 public:
  explicit TrialLedger(LedgerFingerprints fingerprints = {});
  TrialLedger(const TrialLedger& other);
  TrialLedger& operator=(const TrialLedger& other);

  const LedgerFingerprints& fingerprints() const { return fingerprints_; }

  /// Returns true if the record was new.
  bool insert(TrialRecord record);
  bool contains(const std::string& key) const;
  std::optional<TrialRecord> find(const std::string& key) const;
  std::size_t size() const;
  /// Snapshot in insertion order.
  std::vector<TrialRecord> records() const;
  std::vector<std::string> keys() const;

  /// Records whose key is in `keys`, in this ledger's insertion order.
  TrialLedger subset(const std::vector<std::string>& keys) const;
  TrialLedger filter(const std::function<bool(const TrialRecord&)>& keep) const;

  /// Key union. Throws EvaluationError on a fingerprint mismatch or when a
  /// shared key carries a different result.
  void merge(const TrialLedger& other);

  std::string to_jsonl() const;
  static TrialLedger from_jsonl(const std::string& text);
  void save(const std::string& path) const;
  /// Throws EvaluationError if `expected` is given and does not match.
  static TrialLedger load(const std::string& path,
                          const std::optional<LedgerFingerprints>& expected = {});

 private:
  LedgerFingerprints fingerprints_;
  mutable std::mutex mutex_;
  std::deque<TrialRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct FoldOutcome {
  std::vector<double> losses;
  bool failed = false;
  std::string error;
};

/// Source of per-fold losses for a configuration.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual FoldOutcome run(const Configuration& config,
                          std::uint64_t trial_seed) const = 0;
  virtual int folds() const = 0;
  virtual double failure_penalty() const = 0;
  virtual LedgerFingerprints fingerprints() const = 0;
  /// Seed mixed with each configuration key to give the trial seed.
  virtual std::uint64_t base_seed() const { return 0; }
};

/// Reads losses from a table keyed by canonical key; every fold gets the
/// table value. Missing keys throw EvaluationError.
class LookupObjective final : public Objective {
 public:
  LookupObjective(const PipelineSpec& spec, std::map<std::string, double> table,
                  int folds = 5);
  FoldOutcome run(const Configuration& config, std::uint64_t) const override;
  int folds() const override { return folds_; }
  double failure_penalty() const override { return 1e6; }
  LedgerFingerprints fingerprints() const override { return fingerprints_; }
  const std::map<std::string, double>& table() const { return table_; }

 private:
  std::map<std::string, double> table_;
  int folds_;
  LedgerFingerprints fingerprints_;
};

/// Loss computed by a caller-supplied function (same value on every fold).
class FunctionObjective final : public Objective {
 public:
  FunctionObjective(const PipelineSpec& spec,
                    std::function<double(const Configuration&)> loss,
                    std::string label, int folds = 5);
  FoldOutcome run(const Configuration& config, std::uint64_t) const override;
  int folds() const override { return folds_; }
  double failure_penalty() const override { return 1e6; }
  LedgerFingerprints fingerprints() const override { return fingerprints_; }

 private:
  std::function<double(const Configuration&)> loss_;
  int folds_;
  LedgerFingerprints fingerprints_;
};

struct PipelineObjectiveOptions {
  bool standardize = true;
  bool prefix_cache = true;
  std::uint64_t seed = 0;
};

/// Runs the real image pipeline with k-fold cross-validation and
/// cross-entropy loss. Intermediate outputs are cached by
/// (step-prefix key, fold) so shared prefixes run once.
class PipelineObjective final : public Objective {
 public:
  PipelineObjective(const PipelineSpec& spec, ImageDataset data, FoldPlan plan,
                    PipelineObjectiveOptions options = {});
  ~PipelineObjective() override;

  FoldOutcome run(const Configuration& config,
                  std::uint64_t trial_seed) const override;
  int folds() const override { return plan_.k; }
  double failure_penalty() const override;
  LedgerFingerprints fingerprints() const override;
  std::uint64_t base_seed() const override { return options_.seed; }

  /// Executions per step-prefix key, summed over folds.
  std::map<std::string, std::size_t> prefix_cache_stats() const;
  /// Total executions of prefixes of `length` steps whose algorithm at the
  /// last prefix step is `algorithm_id`.
  std::size_t executions(std::size_t length, const std::string& algorithm_id) const;

  const ImageDataset& data() const { return data_; }
  const FoldPlan& plan() const { return plan_; }

 private:
  struct Stage;
  using StagePtr = std::shared_ptr<const Stage>;

  StagePtr stage(const Configuration& config, std::size_t length, int fold) const;
  StagePtr compute_stage(const Configuration& config, std::size_t length,
                         int fold) const;
  double fold_loss(const Configuration& config, int fold,
                   std::uint64_t trial_seed) const;
  ParameterValues parameters(const Configuration& config, std::size_t step) const;

  PipelineSpec spec_;
  ImageDataset data_;
  FoldPlan plan_;
  PipelineObjectiveOptions options_;
  std::vector<ImageDataset> train_parts_;
  std::vector<ImageDataset> valid_parts_;

  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_future<StagePtr>> cache_;
  mutable std::map<std::string, std::size_t> counts_;
  mutable std::map<std::pair<std::size_t, std::string>, std::size_t> algorithm_counts_;
};

/// Evaluates configurations against an objective, memoising in a ledger.
class Evaluator {
 public:
  Evaluator(const Objective& objective, TrialLedger& ledger);

  /// Cached evaluation; computes and inserts on a miss.
  TrialRecord evaluate(const Configuration& config);
  /// Always recomputes; does not touch the ledger.
  TrialRecord compute(const Configuration& config) const;
  /// Evaluates the misses with up to `jobs` threads, then inserts them in
  /// the order given. Returns one record per input.
  std::vector<TrialRecord> evaluate_many(const std::vector<Configuration>& configs,
                                         int jobs = 1);

  /// Records found here are copied instead of recomputed, and new records
  /// are added here as well. Lets several ledgers share computations.
  void set_shared_cache(TrialLedger* cache) { shared_ = cache; }

  TrialLedger& ledger() { return ledger_; }
  const Objective& objective() const { return objective_; }
  std::size_t computations() const { return computations_.load(); }

 private:
  const Objective& objective_;
  TrialLedger& ledger_;
  TrialLedger* shared_ = nullptr;
  std::atomic<std::size_t> computations_{0};
};

TrialRecord lookup_evaluate(const Configuration& config,
                            const std::map<std::string, double>& table,
                            int folds = 5);

}  // namespace pipegrader
