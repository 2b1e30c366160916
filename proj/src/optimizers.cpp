#include "pipegrader/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "pipegrader/forest.hpp"
#include "pipegrader/random.hpp"

namespace pipegrader {

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kBudget:
      return "budget";
    case Termination::kConvergence:
      return "convergence";
    case Termination::kExhaustion:
      return "exhaustion";
  }
  return "exhaustion";
}

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kGrid:
      return "grid";
    case OptimizerKind::kRandom:
      return "random";
    case OptimizerKind::kSmbo:
      return "smbo";
  }
  return "grid";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "grid") return OptimizerKind::kGrid;
  if (text == "random") return OptimizerKind::kRandom;
  if (text == "smbo") return OptimizerKind::kSmbo;
  throw std::invalid_argument("unknown optimizer '" + std::string(text) + "'");
}

namespace {

// Tracks the incumbent and decides when a sequential search stops.
class SearchState {
 public:
  SearchState(OptimizerKind kind, std::size_t grid, const SearchBudget& budget,
              std::size_t warmup)
      : grid_(grid), budget_(budget), warmup_(warmup) {
    result_.optimizer = kind;
  }

  void record(const TrialRecord& r) {
    result_.trial_sequence.push_back(r.key);
    const std::size_t t = result_.trial_sequence.size();
    if (t == 1 || r.mean_loss < result_.best_loss) {
      result_.best_loss = r.mean_loss;
      result_.best_key = r.key;
      last_improvement_ = t;
    } else if (r.mean_loss == result_.best_loss && r.key < result_.best_key) {
      result_.best_key = r.key;
    }
  }

  bool done() {
    const std::size_t t = result_.trial_sequence.size();
    if (t >= grid_) {
      result_.terminated_by = Termination::kExhaustion;
      return true;
    }
    if (budget_.max_trials && t >= *budget_.max_trials) {
      result_.terminated_by = Termination::kBudget;
      return true;
    }
    if (budget_.patience && t > 0 &&
        t - std::max(last_improvement_, std::min(warmup_, t)) >= *budget_.patience) {
      result_.terminated_by = Termination::kConvergence;
      return true;
    }
    return false;
  }

  std::size_t trials() const { return result_.trial_sequence.size(); }
  double best() const { return result_.best_loss; }
  SearchResult take() { return std::move(result_); }

 private:
  std::size_t grid_;
  SearchBudget budget_;
  std::size_t warmup_;
  std::size_t last_improvement_ = 0;
  SearchResult result_;
};

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, "random-order"));
  rng.shuffle(order);
  return order;
}

void check_budget(const SearchBudget& budget) {
  if (budget.max_trials && *budget.max_trials == 0) {
    throw std::invalid_argument("search budget must be at least 1 trial");
  }
  if (budget.patience && *budget.patience == 0) {
    throw std::invalid_argument("convergence patience must be at least 1");
  }
}

}  // namespace

SearchResult grid_search(const PipelineSpec& spec, const Restriction& restriction,
                         Evaluator& evaluator, int jobs) {
  const auto grid = enumerate_grid(spec, restriction);
  if (grid.empty()) throw SpecError("restricted grid is empty");
  const auto records = evaluator.evaluate_many(grid, jobs);
  SearchResult result;
  result.optimizer = OptimizerKind::kGrid;
  result.terminated_by = Termination::kExhaustion;
  for (const auto& r : records) {
    result.trial_sequence.push_back(r.key);
    if (result.best_key.empty() || r.mean_loss < result.best_loss ||
        (r.mean_loss == result.best_loss && r.key < result.best_key)) {
      result.best_loss = r.mean_loss;
      result.best_key = r.key;
    }
  }
  return result;
}

SearchResult random_search(const PipelineSpec& spec, const Restriction& restriction,
                           Evaluator& evaluator, const SearchBudget& budget,
                           std::uint64_t seed) {
  check_budget(budget);
  const auto grid = enumerate_grid(spec, restriction);
  if (grid.empty()) throw SpecError("restricted grid is empty");
  SearchState state(OptimizerKind::kRandom, grid.size(), budget, 0);
  for (std::size_t idx : shuffled_order(grid.size(), seed)) {
    state.record(evaluator.evaluate(grid[idx]));
    if (state.done()) break;
  }
  return state.take();
}

std::size_t encoding_width(const PipelineSpec& spec) {
  std::size_t width = spec.num_steps();
  for (const auto& step : spec.steps) {
    for (const auto& alg : step.algorithms) width += alg.hyperparameters.size();
  }
  return width;
}

std::vector<double> encode_config(const Configuration& config,
                                  const PipelineSpec& spec) {
  std::vector<double> out;
  out.reserve(encoding_width(spec));
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    const auto& algs = spec.steps[s].algorithms;
    auto it = std::find_if(algs.begin(), algs.end(),
                           [&](const AlgorithmSpec& a) { return a.id == config.path.at(s); });
    if (it == algs.end()) throw SpecError("unknown algorithm " + config.path.at(s));
    out.push_back(static_cast<double>(it - algs.begin()));
  }
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    for (const auto& alg : spec.steps[s].algorithms) {
      for (const auto& hp : alg.hyperparameters) {
        auto a = config.assignments.find(alg.qualified_name(hp));
        if (config.path[s] != alg.id || a == config.assignments.end()) {
          out.push_back(-1.0);
        } else {
          out.push_back(static_cast<double>(hp.index_of(a->second).value()));
        }
      }
    }
  }
  return out;
}

double expected_improvement(double incumbent, double mean, double sd) {
  const double gain = incumbent - mean;
  if (!(sd > 1e-12)) return std::max(0.0, gain);
  const double z = gain / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, gain * cdf + sd * pdf);
}

SearchResult smbo_search(const PipelineSpec& spec, const Restriction& restriction,
                         Evaluator& evaluator, const SearchBudget& budget,
                         std::uint64_t seed, const SmboOptions& options) {
  check_budget(budget);
  const auto grid = enumerate_grid(spec, restriction);
  if (grid.empty()) throw SpecError("restricted grid is empty");
  const std::size_t width = encoding_width(spec);
  Eigen::MatrixXd encoded(static_cast<Eigen::Index>(grid.size()),
                          static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto row = encode_config(grid[i], spec);
    for (std::size_t c = 0; c < width; ++c) {
      encoded(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
  }

  SearchState state(OptimizerKind::kSmbo, grid.size(), budget, options.initial_trials);
  std::vector<char> seen(grid.size(), 0);
  std::vector<std::size_t> history;
  std::vector<double> losses;
  auto take = [&](std::size_t idx) {
    const auto r = evaluator.evaluate(grid[idx]);
    seen[idx] = 1;
    history.push_back(idx);
    losses.push_back(r.mean_loss);
    state.record(r);
    return state.done();
  };

  const auto order = shuffled_order(grid.size(), seed);
  for (std::size_t i = 0; i < options.initial_trials && i < order.size(); ++i) {
    if (take(order[i])) return state.take();
  }

  Rng candidate_rng(mix_seed(seed, "smbo-candidates"));
  ForestOptions forest_options;
  forest_options.n_estimators = options.trees;
  forest_options.max_features_fraction = 1.0;
  forest_options.bootstrap = options.bootstrap;
  forest_options.min_samples_leaf = options.min_samples_leaf;

  for (std::uint64_t iteration = 0;; ++iteration) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(history.size()),
                      static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < history.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = encoded.row(static_cast<Eigen::Index>(history[i]));
    }
    RandomForestRegressor surrogate(forest_options, mix_seed(seed, iteration));
    surrogate.fit(x, losses);

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!seen[i]) pool.push_back(i);
    }
    if (pool.size() > options.candidates) {
      for (std::size_t i = 0; i < options.candidates; ++i) {
        std::swap(pool[i], pool[i + candidate_rng.index(pool.size() - i)]);
      }
      pool.resize(options.candidates);
      std::sort(pool.begin(), pool.end());
    }
    Eigen::MatrixXd cx(static_cast<Eigen::Index>(pool.size()),
                       static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < pool.size(); ++i) {
      cx.row(static_cast<Eigen::Index>(i)) = encoded.row(static_cast<Eigen::Index>(pool[i]));
    }
    const auto prediction = surrogate.predict(cx);
    std::size_t pick = pool.front();
    double best_ei = -1.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double ei = expected_improvement(state.best(), prediction.mean(r),
                                             std::sqrt(prediction.variance(r)));
      if (ei > best_ei) {
        best_ei = ei;
        pick = pool[i];
      }
    }
    if (take(pick)) return state.take();
  }
}

SearchResult run_search(OptimizerKind kind, const PipelineSpec& spec,
                        const Restriction& restriction, Evaluator& evaluator,
                        const SearchBudget& budget, std::uint64_t seed, int jobs,
                        const SmboOptions& options) {
  switch (kind) {
    case OptimizerKind::kGrid:
      return grid_search(spec, restriction, evaluator, jobs);
    case OptimizerKind::kRandom:
      return random_search(spec, restriction, evaluator, budget, seed);
    case OptimizerKind::kSmbo:
      return smbo_search(spec, restriction, evaluator, budget, seed, options);
  }
  return grid_search(spec, restriction, evaluator, jobs);
}

}  // namespace pipegrader
