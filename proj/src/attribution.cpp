#include "pipegrader/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pipegrader/random.hpp"

namespace pipegrader {

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::kSteps:
      return "steps";
    case Scope::kAlgorithms:
      return "algorithms";
    case Scope::kHyperparameters:
      return "hyperparameters";
  }
  return "steps";
}

Scope parse_scope(std::string_view text) {
  if (text == "steps") return Scope::kSteps;
  if (text == "algorithms") return Scope::kAlgorithms;
  if (text == "hyperparameters") return Scope::kHyperparameters;
  throw std::invalid_argument("unknown scope '" + std::string(text) + "'");
}

std::string ComponentRef::label(const PipelineSpec& spec) const {
  switch (scope) {
    case Scope::kSteps:
      return spec.steps.at(step).name;
    case Scope::kAlgorithms:
      return algorithm;
    case Scope::kHyperparameters:
      return algorithm + "." + hyperparameter;
  }
  return algorithm;
}

std::vector<ComponentRef> step_components(const PipelineSpec& spec) {
  std::vector<ComponentRef> out;
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    out.push_back({Scope::kSteps, s, {}, {}});
  }
  return out;
}

namespace {

void check_path(const PipelineSpec& spec, const PathId& path) {
  if (path.size() != spec.num_steps()) {
    throw SpecError("path '" + path_label(path) + "' has " +
                    std::to_string(path.size()) + " algorithms, pipeline has " +
                    std::to_string(spec.num_steps()) + " steps");
  }
  for (std::size_t s = 0; s < path.size(); ++s) {
    const auto* alg = spec.steps[s].find(path[s]);
    if (!alg || alg->is_naive) {
      throw SpecError("'" + path[s] + "' is not a pipeline algorithm of step '" +
                      spec.steps[s].name + "'");
    }
  }
}

}  // namespace

std::vector<ComponentRef> algorithm_components(const PipelineSpec& spec,
                                               const PathId& path) {
  check_path(spec, path);
  std::vector<ComponentRef> out;
  for (std::size_t s = 0; s < path.size(); ++s) {
    out.push_back({Scope::kAlgorithms, s, path[s], {}});
  }
  return out;
}

std::vector<ComponentRef> hyperparameter_components(
    const PipelineSpec& spec, const PathId& path,
    const std::vector<std::string>& targets) {
  check_path(spec, path);
  std::vector<ComponentRef> out;
  for (const auto& target : targets) {
    const auto dot = target.find('.');
    bool found = false;
    if (dot != std::string::npos) {
      const auto alg_id = target.substr(0, dot);
      const auto hp = target.substr(dot + 1);
      for (std::size_t s = 0; s < path.size(); ++s) {
        if (path[s] != alg_id) continue;
        if (spec.algorithm(s, alg_id).find_hyperparameter(hp)) {
          out.push_back({Scope::kHyperparameters, s, alg_id, hp});
          found = true;
        }
      }
    }
    if (!found) {
      throw SpecError("hyperparameter '" + target + "' is not on path '" +
                      path_label(path) + "'");
    }
  }
  return out;
}

std::vector<std::string> default_hyperparameter_targets(const PipelineSpec& spec,
                                                        const PathId& path) {
  check_path(spec, path);
  std::vector<std::string> out;
  for (std::size_t s = 0; s < path.size(); ++s) {
    const auto& alg = spec.algorithm(s, path[s]);
    if (!alg.hyperparameters.empty()) {
      out.push_back(alg.qualified_name(alg.hyperparameters.front()));
    }
  }
  return out;
}

CellPartition cells_for(const PipelineSpec& spec, const ComponentRef& component) {
  CellPartition p;
  const std::size_t step = component.step;
  switch (component.scope) {
    case Scope::kSteps: {
      p.cells = spec.steps.at(step).pipeline_ids();
      p.cell_of = [step](const Configuration& c) { return c.path.at(step); };
      break;
    }
    case Scope::kAlgorithms: {
      const auto& alg = spec.algorithm(step, component.algorithm);
      std::vector<std::string> names;
      for (const auto& hp : alg.hyperparameters) names.push_back(alg.qualified_name(hp));
      p.cells = {""};
      for (std::size_t h = 0; h < alg.hyperparameters.size(); ++h) {
        std::vector<std::string> next;
        for (const auto& prefix : p.cells) {
          for (const auto& v : alg.hyperparameters[h].values) {
            next.push_back(prefix + (h ? "," : "") + alg.hyperparameters[h].name + "=" + v);
          }
        }
        p.cells = std::move(next);
      }
      if (alg.hyperparameters.empty()) p.cells = {"default"};
      const auto hps = alg.hyperparameters;
      p.cell_of = [names, hps](const Configuration& c) {
        if (hps.empty()) return std::string("default");
        std::string cell;
        for (std::size_t h = 0; h < hps.size(); ++h) {
          if (h) cell += ",";
          auto it = c.assignments.find(names[h]);
          cell += hps[h].name + "=" + (it == c.assignments.end() ? "?" : it->second);
        }
        return cell;
      };
      break;
    }
    case Scope::kHyperparameters: {
      const auto& alg = spec.algorithm(step, component.algorithm);
      const auto* hp = alg.find_hyperparameter(component.hyperparameter);
      if (!hp) throw SpecError("unknown hyperparameter " + component.label(spec));
      p.cells = hp->values;
      const auto name = alg.qualified_name(*hp);
      p.cell_of = [name](const Configuration& c) {
        auto it = c.assignments.find(name);
        return it == c.assignments.end() ? std::string("?") : it->second;
      };
      break;
    }
  }
  return p;
}

Restriction attribution_restriction(const PipelineSpec& spec, const ComponentRef& c,
                                    const PathId& path) {
  if (c.scope == Scope::kSteps) return Restriction::cash(spec);
  return Restriction::on_path(path);
}

const ContributionEntry* ContributionReport::find(std::string_view component) const {
  for (const auto& e : entries) {
    if (e.component == component) return &e;
  }
  return nullptr;
}

ContributionEntry agnostic_entry(const std::vector<TrialRecord>& records,
                                 double reference, const std::string& label,
                                 const CellPartition& partition, bool allow_partial) {
  ContributionEntry entry;
  entry.component = label;
  for (const auto& r : records) {
    const auto cell = partition.cell_of(r.config);
    auto [it, inserted] = entry.cell_minima.emplace(cell, r.mean_loss);
    if (!inserted) it->second = std::min(it->second, r.mean_loss);
  }
  double sum = 0.0;
  std::size_t covered = 0;
  std::map<std::string, double> kept;
  for (const auto& cell : partition.cells) {
    auto it = entry.cell_minima.find(cell);
    if (it == entry.cell_minima.end()) {
      entry.missing_cells.push_back(cell);
      continue;
    }
    kept.insert(*it);
    sum += it->second - reference;
    ++covered;
  }
  entry.cell_minima = std::move(kept);
  if (!entry.missing_cells.empty() && !allow_partial) {
    throw CoverageError("component '" + label + "': no trial covers cell '" +
                        entry.missing_cells.front() + "'");
  }
  entry.coverage = partition.cells.empty()
                       ? 1.0
                       : static_cast<double>(covered) / static_cast<double>(partition.cells.size());
  entry.contribution = covered ? sum / static_cast<double>(covered)
                               : std::numeric_limits<double>::quiet_NaN();
  entry.mean = entry.contribution;
  entry.per_seed = {entry.contribution};
  return entry;
}

std::optional<double> restricted_minimum(const std::vector<TrialRecord>& records,
                                         const PipelineSpec& spec,
                                         const Restriction& restriction) {
  std::optional<double> best;
  for (const auto& r : records) {
    if (!restriction.admits(spec, r.config)) continue;
    if (!best || r.mean_loss < *best) best = r.mean_loss;
  }
  return best;
}

namespace {

std::vector<TrialRecord> admitted(const TrialLedger& ledger, const PipelineSpec& spec,
                                  const Restriction& restriction, bool exclude_failed) {
  std::vector<TrialRecord> out;
  for (auto& r : ledger.records()) {
    if (exclude_failed && r.failed) continue;
    if (restriction.admits(spec, r.config)) out.push_back(std::move(r));
  }
  return out;
}

ContributionReport build_report(Scope scope, const TrialLedger& ledger,
                                const PipelineSpec& spec, const PathId& path,
                                const std::vector<ComponentRef>& components,
                                const AttributionOptions& options) {
  ContributionReport report;
  report.scope = scope;
  if (scope != Scope::kSteps) report.path = path;
  const auto restriction = scope == Scope::kSteps ? Restriction::cash(spec)
                                                  : Restriction::on_path(path);
  const auto records = admitted(ledger, spec, restriction, options.exclude_failed);
  if (records.empty()) {
    throw CoverageError("ledger has no trials on " +
                        (scope == Scope::kSteps ? std::string("the pipeline")
                                                : "path '" + path_label(path) + "'"));
  }
  double reference = records.front().mean_loss;
  for (const auto& r : records) reference = std::min(reference, r.mean_loss);
  report.reference_min = reference;
  report.per_seed_reference = {reference};
  for (const auto& c : components) {
    report.entries.push_back(agnostic_entry(records, reference, c.label(spec),
                                            cells_for(spec, c), options.allow_partial));
  }
  return report;
}

}  // namespace

ContributionReport contribution_steps(const TrialLedger& ledger, const PipelineSpec& spec,
                                      const AttributionOptions& options) {
  return build_report(Scope::kSteps, ledger, spec, {}, step_components(spec), options);
}

ContributionReport contribution_algorithms(const TrialLedger& ledger,
                                           const PipelineSpec& spec, const PathId& path,
                                           const AttributionOptions& options) {
  return build_report(Scope::kAlgorithms, ledger, spec, path,
                      algorithm_components(spec, path), options);
}

ContributionReport contribution_hyperparameters(const TrialLedger& ledger,
                                                const PipelineSpec& spec,
                                                const PathId& path,
                                                const std::vector<std::string>& targets,
                                                const AttributionOptions& options) {
  return build_report(Scope::kHyperparameters, ledger, spec, path,
                      hyperparameter_components(spec, path, targets), options);
}

ContributionReport contribution(Scope scope, const TrialLedger& ledger,
                                const PipelineSpec& spec, const PathId& path,
                                const std::vector<std::string>& targets,
                                const AttributionOptions& options) {
  switch (scope) {
    case Scope::kSteps:
      return contribution_steps(ledger, spec, options);
    case Scope::kAlgorithms:
      return contribution_algorithms(ledger, spec, path, options);
    case Scope::kHyperparameters:
      return contribution_hyperparameters(
          ledger, spec, path,
          targets.empty() ? default_hyperparameter_targets(spec, path) : targets, options);
  }
  return contribution_steps(ledger, spec, options);
}

namespace {

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

}  // namespace

ContributionReport aggregate_over_seeds(const std::vector<ContributionReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  const auto& first = reports.front();
  if (first.estimator == OptimizerKind::kGrid && reports.size() != 1) {
    throw std::invalid_argument("grid search is deterministic; aggregate exactly one run");
  }
  for (const auto& r : reports) {
    bool same = r.scope == first.scope && r.path == first.path &&
                r.estimator == first.estimator && r.entries.size() == first.entries.size();
    for (std::size_t i = 0; same && i < r.entries.size(); ++i) {
      same = r.entries[i].component == first.entries[i].component;
    }
    if (!same) throw std::invalid_argument("reports differ in scope, path, estimator or components");
  }
  if (reports.size() == 1) return first;

  ContributionReport out;
  out.scope = first.scope;
  out.path = first.path;
  out.estimator = first.estimator;
  out.seeds = reports.size();
  for (const auto& r : reports) out.per_seed_reference.push_back(r.reference_min);
  out.reference_min = mean_and_std(out.per_seed_reference).first;
  for (std::size_t i = 0; i < first.entries.size(); ++i) {
    ContributionEntry e;
    e.component = first.entries[i].component;
    e.coverage = 1.0;
    for (const auto& r : reports) {
      e.per_seed.push_back(r.entries[i].contribution);
      e.coverage = std::min(e.coverage, r.entries[i].coverage);
      for (const auto& m : r.entries[i].missing_cells) {
        if (std::find(e.missing_cells.begin(), e.missing_cells.end(), m) == e.missing_cells.end()) {
          e.missing_cells.push_back(m);
        }
      }
    }
    std::tie(e.mean, e.std) = mean_and_std(e.per_seed);
    e.contribution = e.mean;
    out.entries.push_back(std::move(e));
  }
  return out;
}

std::size_t ensure_coverage(const PipelineSpec& spec, const Restriction& restriction,
                            const std::vector<ComponentRef>& components,
                            Evaluator& evaluator, std::uint64_t seed) {
  const auto grid = enumerate_grid(spec, restriction);
  std::size_t added = 0;
  for (const auto& component : components) {
    const auto partition = cells_for(spec, component);
    std::set<std::string> covered;
    for (const auto& r : evaluator.ledger().records()) {
      if (restriction.admits(spec, r.config)) covered.insert(partition.cell_of(r.config));
    }
    for (const auto& cell : partition.cells) {
      if (covered.count(cell)) continue;
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (partition.cell_of(grid[i]) == cell) members.push_back(i);
      }
      if (members.empty()) continue;
      Rng rng(mix_seed(seed, component.label(spec) + "|" + cell));
      evaluator.evaluate(grid[members[rng.index(members.size())]]);
      covered.insert(cell);
      ++added;
    }
  }
  return added;
}

}  // namespace pipegrader
