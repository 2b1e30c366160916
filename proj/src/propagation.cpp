#include "pipegrader/propagation.hpp"

#include <cmath>

#include "pipegrader/random.hpp"

namespace pipegrader {

void require_naive_algorithms(const PipelineSpec& spec) {
  for (const auto& step : spec.steps) {
    if (!step.naive()) {
      throw MissingNaiveError("step '" + step.name +
                              "' has no naive benchmark algorithm");
    }
  }
}

std::vector<std::string> flag_names(unsigned flags) {
  std::vector<std::string> out;
  if (flags & kLastStepConvention) out.emplace_back("last-step-convention");
  if (flags & kDegenerateDenominator) out.emplace_back("degenerate-denominator");
  if (flags & kNegativeGamma) out.emplace_back("negative-gamma");
  if (flags & kModelViolation) out.emplace_back("model-violation");
  return out;
}

PropagationResult solve_propagation(double d1, double d2, double d3, double epsilon) {
  PropagationResult r;
  r.delta_e1 = d1;
  r.delta_e2 = d2;
  r.delta_e3 = d3;
  if (d3 <= epsilon && std::abs(d2 - d1) <= epsilon) {
    r.e_direct = d1;
    r.e_propagation = 0.0;
    r.gamma = 0.0;
    r.flags = kLastStepConvention;
    return r;
  }
  const double denominator = d2 + d3 - d1;
  if (std::abs(denominator) <= epsilon || std::abs(d3) <= epsilon) {
    r.flags = kDegenerateDenominator;
    return r;
  }
  r.e_direct = d1 * d3 / denominator;
  r.e_propagation = d1 * (d2 - d1) / denominator;
  r.gamma = (d2 - d1) / d3;
  if (*r.gamma < 0.0) {
    r.flags = kNegativeGamma | kModelViolation;
  } else if (*r.e_direct < -epsilon) {
    r.flags = kModelViolation;
  }
  return r;
}

PropagationResult solve_propagation(const NaiveErrorSextuple& s, double epsilon) {
  return solve_propagation(s.e_agnostic_opt - s.e_opt_opt,
                           s.e_agnostic_naive - s.e_opt_naive,
                           s.e_naive_naive - s.e_naive_opt, epsilon);
}

Restriction constrained_restriction(const PipelineSpec& spec, const ComponentRef& component,
                                    const PathId& path, ConstrainedGrid mode) {
  Restriction r;
  r.allowed.resize(spec.num_steps());
  const bool on_path = component.scope != Scope::kSteps;
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    const bool naive = (s == component.step && mode.current_naive) ||
                       (s > component.step && mode.downstream_naive);
    if (naive) {
      r.allowed[s] = {spec.steps[s].naive()->id};
    } else if (on_path) {
      r.allowed[s] = {path.at(s)};
    }
  }
  return r;
}

namespace {

struct Memo {
  std::map<std::string, TrialLedger>& ledgers;
  std::map<std::string, SearchResult>& searches;
};

const TrialLedger& constrained_ledger(const PipelineSpec& spec, const Objective& objective,
                                      const Restriction& restriction, std::uint64_t seed,
                                      const SextupleOptions& options, Memo& memo) {
  const auto key = restriction.key();
  auto found = memo.ledgers.find(key);
  if (found != memo.ledgers.end()) return found->second;
  if (grid_size(spec, restriction) == 0) {
    throw SpecError("constrained grid '" + key + "' is empty");
  }
  auto [it, inserted] = memo.ledgers.emplace(key, TrialLedger(objective.fingerprints()));
  Evaluator evaluator(objective, it->second);
  evaluator.set_shared_cache(options.cache);
  memo.searches[key] = run_search(options.optimizer, spec, restriction, evaluator,
                                  options.budget, mix_seed(seed, key), options.jobs,
                                  options.smbo);
  return it->second;
}

double ledger_minimum(const TrialLedger& ledger) {
  const auto records = ledger.records();
  double best = records.at(0).mean_loss;
  for (const auto& r : records) best = std::min(best, r.mean_loss);
  return best;
}

NaiveErrorSextuple sextuple_with_memo(const PipelineSpec& spec, const Objective& objective,
                                      const ComponentRef& component, const PathId& path,
                                      std::uint64_t seed, const SextupleOptions& options,
                                      Memo& memo) {
  require_naive_algorithms(spec);
  if (component.scope != Scope::kSteps) algorithm_components(spec, path);

  NaiveErrorSextuple s;
  s.component = component.label(spec);
  s.scope = component.scope;
  const auto partition = cells_for(spec, component);

  auto search = [&](bool current_naive, bool downstream_naive) -> const TrialLedger& {
    const auto restriction = constrained_restriction(
        spec, component, path, {current_naive, downstream_naive});
    const auto& ledger =
        constrained_ledger(spec, objective, restriction, seed, options, memo);
    if (options.ensure_coverage && !current_naive) {
      auto& mutable_ledger = memo.ledgers.at(restriction.key());
      Evaluator evaluator(objective, mutable_ledger);
      evaluator.set_shared_cache(options.cache);
      ensure_coverage(spec, restriction, {component}, evaluator,
                      mix_seed(seed, restriction.key() + "#coverage"));
    }
    return ledger;
  };
  auto agnostic = [&](const TrialLedger& ledger, double& coverage) {
    const auto entry = agnostic_entry(ledger.records(), 0.0, s.component, partition,
                                      options.allow_partial);
    coverage = entry.coverage;
    return entry.contribution;
  };

  const auto& opt_opt = search(false, false);
  s.e_opt_opt = ledger_minimum(opt_opt);
  s.e_agnostic_opt = agnostic(opt_opt, s.coverage_opt);
  const auto& opt_naive = search(false, true);
  s.e_opt_naive = ledger_minimum(opt_naive);
  s.e_agnostic_naive = agnostic(opt_naive, s.coverage_naive);
  s.e_naive_opt = ledger_minimum(search(true, false));
  s.e_naive_naive = ledger_minimum(search(true, true));
  return s;
}

FieldSummary summarize(const std::vector<double>& values) {
  FieldSummary f;
  f.count = values.size();
  if (values.empty()) return f;
  double sum = 0.0;
  for (double v : values) sum += v;
  f.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - f.mean) * (v - f.mean);
    f.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return f;
}

}  // namespace

SextupleRun compute_sextuple(const PipelineSpec& spec, const Objective& objective,
                             const ComponentRef& component, const PathId& path,
                             std::uint64_t seed, const SextupleOptions& options) {
  SextupleRun run;
  Memo memo{run.ledgers, run.searches};
  run.sextuple = sextuple_with_memo(spec, objective, component, path, seed, options, memo);
  return run;
}

const PropagationEntry* PropagationReport::find(std::string_view component) const {
  for (const auto& e : entries) {
    if (e.component == component) return &e;
  }
  return nullptr;
}

PropagationReport propagation_report(const PipelineSpec& spec, const Objective& objective,
                                     const std::vector<ComponentRef>& components,
                                     const PathId& path,
                                     const std::vector<std::uint64_t>& seeds,
                                     const SextupleOptions& options, double epsilon,
                                     std::map<std::string, TrialLedger>* ledgers) {
  require_naive_algorithms(spec);
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (options.optimizer == OptimizerKind::kGrid && seeds.size() != 1) {
    throw std::invalid_argument("grid search is deterministic; use exactly one seed");
  }
  PropagationReport report;
  report.scope = components.empty() ? Scope::kSteps : components.front().scope;
  if (report.scope != Scope::kSteps) report.path = path;
  report.estimator = options.optimizer;
  report.seeds = seeds;
  report.epsilon = epsilon;
  for (const auto& c : components) report.entries.push_back({c.label(spec), {}, {}, {}, 0, ~0u});

  for (std::size_t si = 0; si < seeds.size(); ++si) {
    std::map<std::string, TrialLedger> seed_ledgers;
    std::map<std::string, SearchResult> seed_searches;
    Memo memo{seed_ledgers, seed_searches};
    for (std::size_t ci = 0; ci < components.size(); ++ci) {
      const auto s = sextuple_with_memo(spec, objective, components[ci], path, seeds[si],
                                        options, memo);
      auto& entry = report.entries[ci];
      entry.per_seed_sextuples.push_back(s);
      entry.per_seed_results.push_back(solve_propagation(s, epsilon));
    }
    if (ledgers) {
      for (auto& [key, ledger] : seed_ledgers) {
        ledgers->emplace("seed" + std::to_string(si) + ":" + key, std::move(ledger));
      }
    }
  }

  for (auto& entry : report.entries) {
    std::map<std::string, std::vector<double>> fields;
    for (std::size_t i = 0; i < entry.per_seed_results.size(); ++i) {
      const auto& s = entry.per_seed_sextuples[i];
      const auto& r = entry.per_seed_results[i];
      fields["e_opt_opt"].push_back(s.e_opt_opt);
      fields["e_agnostic_opt"].push_back(s.e_agnostic_opt);
      fields["e_naive_opt"].push_back(s.e_naive_opt);
      fields["e_opt_naive"].push_back(s.e_opt_naive);
      fields["e_naive_naive"].push_back(s.e_naive_naive);
      fields["e_agnostic_naive"].push_back(s.e_agnostic_naive);
      fields["delta_e1"].push_back(r.delta_e1);
      fields["delta_e2"].push_back(r.delta_e2);
      fields["delta_e3"].push_back(r.delta_e3);
      auto& direct = fields["e_direct"];
      auto& propagated = fields["e_propagation"];
      auto& gamma = fields["gamma"];
      if (r.e_direct) direct.push_back(*r.e_direct);
      if (r.e_propagation) propagated.push_back(*r.e_propagation);
      if (r.gamma) gamma.push_back(*r.gamma);
      entry.flags_any |= r.flags;
      entry.flags_all &= r.flags;
    }
    for (const auto& [name, values] : fields) entry.summary[name] = summarize(values);
  }
  return report;
}

}  // namespace pipegrader
