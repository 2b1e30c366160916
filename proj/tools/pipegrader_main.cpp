// Command-line driver: searches, attribution, propagation, report comparison
// and dataset export.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pipegrader/attribution.hpp"
#include "pipegrader/datasets.hpp"
#include "pipegrader/evaluator.hpp"
#include "pipegrader/optimizers.hpp"
#include "pipegrader/pipeline_model.hpp"
#include "pipegrader/propagation.hpp"
#include "pipegrader/random.hpp"
#include "pipegrader/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pipegrader;

namespace {

constexpr int kExitError = 1;
constexpr int kExitSpec = 2;
constexpr int kExitCoverage = 3;

struct RunOptions {
  std::string spec_path;
  std::string dataset = "balanced-small";
  std::string optimizer = "grid";
  std::string framework = "cash";
  std::string path;
  std::string scope = "all";
  std::vector<std::string> targets;
  std::vector<std::string> ledgers;
  std::size_t budget = 0;
  std::size_t patience = 50;
  std::size_t seeds = 5;
  std::optional<int> folds;
  int jobs = 1;
  double train_fraction = 0.8;
  double epsilon = kDefaultEpsilon;
  bool ensure_coverage = false;
  bool allow_partial = false;
  bool no_standardize = false;
  std::optional<std::uint64_t> seed;
  std::string out = "pipegrader-out";
};

std::uint64_t base_seed(const RunOptions& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("PIPEGRADER_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument("PIPEGRADER_SEED must be a non-negative integer");
    }
  }
  return 0;
}

// Everything a command needs to evaluate trials on the real pipeline.
struct Workspace {
  PipelineSpec spec;
  ImageDataset train;
  FoldPlan plan;
  std::unique_ptr<PipelineObjective> objective;
  TrialLedger cache;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> search_seeds;
  OptimizerKind optimizer = OptimizerKind::kGrid;
  SearchBudget budget;
};

Workspace open_workspace(const RunOptions& o) {
  Workspace w;
  w.spec = o.spec_path.empty() ? default_image_pipeline() : load_spec_file(o.spec_path);
  if (o.folds) w.spec.folds = *o.folds;
  w.seed = base_seed(o);
  ImageDataset full = fs::is_directory(o.dataset)
                          ? import_dataset(o.dataset)
                          : generate_texture_dataset(o.dataset, w.seed);
  w.train = split_train_test(full, o.train_fraction, w.seed).first;
  w.plan = make_folds(w.train, w.spec.folds, w.seed);
  PipelineObjectiveOptions po;
  po.standardize = !o.no_standardize;
  po.seed = w.seed;
  w.objective = std::make_unique<PipelineObjective>(w.spec, w.train, w.plan, po);
  w.cache = TrialLedger(w.objective->fingerprints());
  w.optimizer = parse_optimizer(o.optimizer);
  const std::size_t n = w.optimizer == OptimizerKind::kGrid ? 1 : std::max<std::size_t>(1, o.seeds);
  for (std::size_t i = 0; i < n; ++i) w.search_seeds.push_back(mix_seed(w.seed, i));
  if (o.budget) w.budget.max_trials = o.budget;
  if (o.patience) {
    w.budget.patience = o.patience;
  } else {
    w.budget.patience.reset();
  }
  return w;
}

PathId analysis_path(const RunOptions& o, const PipelineSpec& spec) {
  return o.path.empty() ? default_analysis_path(spec) : parse_path(o.path);
}

void write_manifest(const std::string& command, const RunOptions& o, const Workspace& w) {
  fs::create_directories(o.out);
  const auto fp = w.objective->fingerprints();
  json seeds = json::array();
  for (auto s : w.search_seeds) seeds.push_back(s);
  json manifest = {
      {"command", command},
      {"tool_version", kToolVersion},
      {"spec_path", o.spec_path.empty() ? std::string("<builtin image pipeline>") : o.spec_path},
      {"dataset", o.dataset},
      {"optimizer", o.optimizer},
      {"framework", o.framework},
      {"path", o.path},
      {"scope", o.scope},
      {"targets", o.targets},
      {"budget", o.budget},
      {"patience", o.patience},
      {"seeds", w.search_seeds.size()},
      {"search_seeds", seeds},
      {"base_seed", w.seed},
      {"folds", w.spec.folds},
      {"train_fraction", o.train_fraction},
      {"epsilon", o.epsilon},
      {"flags",
       {{"ensure_coverage", o.ensure_coverage},
        {"allow_partial", o.allow_partial},
        {"no_standardize", o.no_standardize}}},
      {"ledgers", o.ledgers},
      {"output_dir", o.out},
      {"fingerprints",
       {{"spec", fp.spec}, {"dataset", fp.dataset}, {"folds", fp.folds}}},
  };
  write_text((fs::path(o.out) / "manifest.json").string(), dump_json(manifest));
}

Restriction framework_restriction(const RunOptions& o, const PipelineSpec& spec) {
  if (o.framework == "cash") return Restriction::cash(spec);
  if (o.framework == "hpo") return Restriction::on_path(analysis_path(o, spec));
  throw std::invalid_argument("--framework must be cash or hpo");
}

json search_summary(const std::vector<SearchResult>& results) {
  std::vector<double> best;
  for (const auto& r : results) best.push_back(r.best_loss);
  double mean = 0.0;
  for (double b : best) mean += b;
  mean /= static_cast<double>(best.size());
  double ss = 0.0;
  for (double b : best) ss += (b - mean) * (b - mean);
  const double sd = best.size() > 1 ? std::sqrt(ss / static_cast<double>(best.size() - 1)) : 0.0;
  return {{"best_loss_mean", mean}, {"best_loss_std", sd}, {"runs", best.size()}};
}

int cmd_optimize(const RunOptions& o) {
  auto w = open_workspace(o);
  write_manifest("optimize", o, w);
  const auto restriction = framework_restriction(o, w.spec);
  std::vector<SearchResult> results;
  json runs = json::array();
  for (std::size_t i = 0; i < w.search_seeds.size(); ++i) {
    TrialLedger ledger(w.objective->fingerprints());
    Evaluator evaluator(*w.objective, ledger);
    evaluator.set_shared_cache(&w.cache);
    const auto start = std::chrono::steady_clock::now();
    auto result = run_search(w.optimizer, w.spec, restriction, evaluator, w.budget,
                             w.search_seeds[i], o.jobs);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto ledger_name = "ledger_seed" + std::to_string(i) + ".jsonl";
    ledger.save((fs::path(o.out) / ledger_name).string());
    auto j = to_json(result);
    j["seed"] = w.search_seeds[i];
    j["ledger"] = ledger_name;
    j["wall_time"] = elapsed;
    runs.push_back(j);
    results.push_back(std::move(result));
    std::cerr << "seed " << i << ": best " << results.back().best_loss << " after "
              << results.back().trial_sequence.size() << " trials ("
              << to_string(results.back().terminated_by) << ")\n";
  }
  json cache;
  for (const auto& [prefix, count] : w.objective->prefix_cache_stats()) cache[prefix] = count;
  json doc = {{"framework", o.framework},
              {"restriction", restriction.key()},
              {"runs", runs},
              {"aggregate", search_summary(results)},
              {"prefix_cache_stats", cache}};
  write_text((fs::path(o.out) / "optimize.json").string(), dump_json(doc));
  return 0;
}

std::vector<Scope> requested_scopes(const std::string& scope) {
  if (scope == "all") return {Scope::kSteps, Scope::kAlgorithms, Scope::kHyperparameters};
  return {parse_scope(scope)};
}

int cmd_contrib(const RunOptions& o) {
  auto w = open_workspace(o);
  write_manifest("contrib", o, w);
  const PathId path = analysis_path(o, w.spec);
  AttributionOptions ao{o.allow_partial, false};

  // Ledgers are either supplied (one per seed) or produced here.
  std::vector<TrialLedger> supplied;
  for (const auto& file : o.ledgers) {
    supplied.push_back(TrialLedger::load(file, w.objective->fingerprints()));
  }
  for (Scope scope : requested_scopes(o.scope)) {
    const auto restriction = scope == Scope::kSteps ? Restriction::cash(w.spec)
                                                    : Restriction::on_path(path);
    std::vector<ComponentRef> components =
        scope == Scope::kSteps ? step_components(w.spec)
        : scope == Scope::kAlgorithms
            ? algorithm_components(w.spec, path)
            : hyperparameter_components(
                  w.spec, path,
                  o.targets.empty() ? default_hyperparameter_targets(w.spec, path) : o.targets);
    std::vector<ContributionReport> per_seed;
    const std::size_t runs = supplied.empty() ? w.search_seeds.size() : supplied.size();
    for (std::size_t i = 0; i < runs; ++i) {
      TrialLedger ledger = supplied.empty() ? TrialLedger(w.objective->fingerprints())
                                            : supplied[i];
      Evaluator evaluator(*w.objective, ledger);
      evaluator.set_shared_cache(&w.cache);
      const std::uint64_t seed = supplied.empty() ? w.search_seeds[i] : mix_seed(w.seed, i);
      if (supplied.empty()) {
        run_search(w.optimizer, w.spec, restriction, evaluator, w.budget, seed, o.jobs);
      }
      if (o.ensure_coverage) {
        ensure_coverage(w.spec, restriction, components, evaluator, mix_seed(seed, "coverage"));
      }
      if (supplied.empty() || o.ensure_coverage) {
        ledger.save((fs::path(o.out) / ("ledger_" + std::string(to_string(scope)) + "_seed" +
                                        std::to_string(i) + ".jsonl"))
                        .string());
      }
      auto report = contribution(scope, ledger, w.spec, path, o.targets, ao);
      report.estimator = w.optimizer;
      per_seed.push_back(std::move(report));
    }
    const auto aggregate = aggregate_over_seeds(per_seed);
    for (const auto& e : aggregate.entries) {
      if (e.coverage < 1.0) {
        std::cerr << "warning: " << e.component << " has coverage " << e.coverage << "\n";
      }
    }
    const std::string stem = "contrib_" + std::string(to_string(scope));
    write_text((fs::path(o.out) / (stem + ".json")).string(), dump_json(to_json(aggregate)));
    write_text((fs::path(o.out) / (stem + ".csv")).string(), contribution_csv(aggregate));
  }
  return 0;
}

int cmd_propagate(const RunOptions& o) {
  auto w = open_workspace(o);
  require_naive_algorithms(w.spec);
  write_manifest("propagate", o, w);
  const PathId path = analysis_path(o, w.spec);
  SextupleOptions so;
  so.optimizer = w.optimizer;
  so.budget = w.budget;
  so.allow_partial = o.allow_partial;
  so.ensure_coverage = o.ensure_coverage;
  so.jobs = o.jobs;
  so.cache = &w.cache;
  for (Scope scope : requested_scopes(o.scope)) {
    std::vector<ComponentRef> components =
        scope == Scope::kSteps ? step_components(w.spec)
        : scope == Scope::kAlgorithms
            ? algorithm_components(w.spec, path)
            : hyperparameter_components(
                  w.spec, path,
                  o.targets.empty() ? default_hyperparameter_targets(w.spec, path) : o.targets);
    const auto report = propagation_report(w.spec, *w.objective, components, path,
                                           w.search_seeds, so, o.epsilon);
    const std::string stem = "propagation_" + std::string(to_string(scope));
    write_text((fs::path(o.out) / (stem + ".json")).string(), dump_json(to_json(report)));
    write_text((fs::path(o.out) / (stem + ".csv")).string(), propagation_csv(report));
  }
  w.cache.save((fs::path(o.out) / "ledger_all_trials.jsonl").string());
  return 0;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& field,
                const std::string& out) {
  std::vector<json> reports;
  for (const auto& f : files) reports.push_back(json::parse(read_text(f)));
  const auto result = compare_reports(reports, field);
  if (out.empty()) {
    std::cout << dump_json(result);
  } else {
    write_text(out, dump_json(result));
  }
  return 0;
}

int cmd_dataset_gen(const std::string& preset, const std::string& out,
                    std::optional<std::uint64_t> seed) {
  RunOptions o;
  o.seed = seed;
  const auto ds = generate_texture_dataset(preset, base_seed(o));
  export_dataset(ds, out);
  std::cerr << "wrote " << ds.size() << " images to " << out << "\n";
  return 0;
}

void add_shared_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--spec", o.spec_path, "Pipeline spec JSON (default: built-in image pipeline)");
  cmd->add_option("--dataset", o.dataset, "Texture preset or directory with manifest.csv");
  cmd->add_option("--optimizer", o.optimizer, "grid, random or smbo")
      ->check(CLI::IsMember({"grid", "random", "smbo"}));
  cmd->add_option("--framework", o.framework, "cash or hpo")
      ->check(CLI::IsMember({"cash", "hpo"}));
  cmd->add_option("--path", o.path, "Comma-separated algorithm ids, one per step");
  cmd->add_option("--budget", o.budget, "Maximum trials per search (0: whole grid)");
  cmd->add_option("--patience", o.patience, "Trials without improvement before stopping (0: off)");
  cmd->add_option("--seeds", o.seeds, "Search seeds (grid always uses one)");
  cmd->add_option("--folds", o.folds, "Cross-validation folds (default: from the spec)")->check(CLI::Range(2, 100));
  cmd->add_option("--jobs", o.jobs, "Worker threads for grid evaluation")->check(CLI::Range(1, 1024));
  cmd->add_option("--seed", o.seed, "Base seed (overrides PIPEGRADER_SEED)");
  cmd->add_option("--train-fraction", o.train_fraction, "Training share of the split")
      ->check(CLI::Range(0.01, 0.99));
  cmd->add_flag("--ensure-coverage", o.ensure_coverage, "Add one trial per uncovered cell");
  cmd->add_flag("--allow-partial", o.allow_partial, "Skip uncovered cells instead of failing");
  cmd->add_flag("--no-standardize", o.no_standardize, "Feed raw features to the learner");
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pipeline optimisation and error attribution"};
  app.require_subcommand(1);
  RunOptions o;

  auto* optimize = app.add_subcommand("optimize", "Run CASH or per-path HPO searches");
  add_shared_flags(optimize, o);

  auto* contrib = app.add_subcommand("contrib", "Agnostic error contributions");
  add_shared_flags(contrib, o);
  contrib->add_option("--scope", o.scope, "steps, algorithms, hyperparameters or all")
      ->check(CLI::IsMember({"steps", "algorithms", "hyperparameters", "all"}));
  contrib->add_option("--targets", o.targets, "Qualified hyperparameter names")->delimiter(',');
  contrib->add_option("--ledger", o.ledgers, "Existing ledger files, one per seed");

  auto* propagate = app.add_subcommand("propagate", "Naive-benchmark error propagation");
  add_shared_flags(propagate, o);
  propagate->add_option("--scope", o.scope, "steps, algorithms, hyperparameters or all")
      ->check(CLI::IsMember({"steps", "algorithms", "hyperparameters", "all"}));
  propagate->add_option("--targets", o.targets, "Qualified hyperparameter names")->delimiter(',');
  propagate->add_option("--epsilon", o.epsilon, "Degeneracy tolerance");

  std::vector<std::string> compare_files;
  std::string compare_field;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Compare reports of one scope");
  compare->add_option("reports", compare_files, "Report JSON files")->required()->expected(2, -1);
  compare->add_option("--field", compare_field, "Value to compare");
  compare->add_option("--out", compare_out, "Write the comparison here instead of stdout");

  std::string gen_preset = "balanced-small";
  std::string gen_out = "dataset";
  std::optional<std::uint64_t> gen_seed;
  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Export a synthetic texture dataset as PNGs");
  gen->add_option("--dataset", gen_preset, "Preset name");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Generator seed (overrides PIPEGRADER_SEED)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize->parsed()) return cmd_optimize(o);
    if (contrib->parsed()) return cmd_contrib(o);
    if (propagate->parsed()) return cmd_propagate(o);
    if (compare->parsed()) return cmd_compare(compare_files, compare_field, compare_out);
    if (gen->parsed()) return cmd_dataset_gen(gen_preset, gen_out, gen_seed);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSpec;
  } catch (const CoverageError& e) {
    std::cerr << "coverage error: " << e.what() << "\n";
    return kExitCoverage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
