#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pipegrader/propagation.hpp"
#include "pipegrader/random.hpp"

using namespace pipegrader;
using pipegrader::testing::domain_index;
using pipegrader::testing::make_table;
using pipegrader::testing::two_step_spec;

namespace {

const PathId kHir = {"haralick", "isomap", "rf"};

SextupleOptions exhaustive(OptimizerKind kind = OptimizerKind::kGrid) {
  SextupleOptions options;
  options.optimizer = kind;
  options.budget = SearchBudget{std::nullopt, std::nullopt};
  return options;
}

std::map<std::string, double> planted_two_step(const PipelineSpec& spec, double e_oo,
                                               double e_ao, double e_no, double e_on,
                                               double e_an, double e_nn) {
  return make_table(spec, Restriction::everything(spec), [&](const Configuration& c) {
    const bool naive_down = c.path[1] == "N2";
    if (c.path[0] == "A") return naive_down ? e_on : e_oo;
    if (c.path[0] == "B") return naive_down ? 2.0 * e_an - e_on : 2.0 * e_ao - e_oo;
    return naive_down ? e_nn : e_no;
  });
}

}  // namespace

TEST_SUITE("propagation") {
  TEST_CASE("solver examples") {
    const auto r = solve_propagation(0.3, 0.5, 0.4);
    CHECK(r.flags == 0);
    CHECK(*r.gamma == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(*r.e_direct == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(*r.e_propagation == doctest::Approx(0.1).epsilon(1e-12));

    const auto flat = solve_propagation(0.3, 0.3, 0.2);
    CHECK(flat.flags == 0);
    CHECK(*flat.gamma == 0.0);
    CHECK(*flat.e_direct == doctest::Approx(0.3));
    CHECK(*flat.e_propagation == 0.0);

    const auto last = solve_propagation(0.3, 0.3, 0.0);
    CHECK(last.flags == kLastStepConvention);
    CHECK(*last.e_direct == 0.3);
    CHECK(*last.gamma == 0.0);
    CHECK(*last.e_propagation == 0.0);
    CHECK(flag_names(last.flags) == std::vector<std::string>{"last-step-convention"});
  }

  TEST_CASE("degenerate and negative cases are flagged") {
    const auto degenerate = solve_propagation(0.5, 0.3, 0.2);
    CHECK((degenerate.flags & kDegenerateDenominator) != 0);
    CHECK_FALSE(degenerate.e_direct.has_value());
    CHECK_FALSE(degenerate.gamma.has_value());

    const auto negative = solve_propagation(0.3, 0.2, 0.4);
    CHECK((negative.flags & kNegativeGamma) != 0);
    CHECK(*negative.gamma < 0.0);
    CHECK(std::isfinite(*negative.e_direct));
  }

  TEST_CASE("closure on random triples") {
    Rng rng(1234);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
      const double d1 = rng.uniform(-1.0, 1.0), d2 = rng.uniform(-1.0, 1.0),
                   d3 = rng.uniform(0.01, 1.0);
      const auto r = solve_propagation(d1, d2, d3);
      if (!r.e_direct) continue;
      ++checked;
      const double a = *r.e_direct, g = *r.gamma;
      CHECK(std::abs(a * (1.0 + g) - d1) <= 1e-12 * std::max(1.0, std::abs(d1)) * 10);
      CHECK(std::abs(a + g * (a + d3) - d2) <= 1e-12 * std::max(1.0, std::abs(d2)) * 10);
      CHECK(std::abs(g * a - *r.e_propagation) <= 1e-12);
    }
    CHECK(checked > 950);
  }

  TEST_CASE("planted two-step sextuple is recovered exactly") {
    const auto spec = two_step_spec();
    const auto table = planted_two_step(spec, 0.1, 0.4, 0.5, 0.3, 0.7, 0.9);
    LookupObjective objective(spec, table);
    const auto run = compute_sextuple(spec, objective, step_components(spec)[0], {}, 0,
                                      exhaustive());
    const auto& s = run.sextuple;
    CHECK(s.e_opt_opt == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(s.e_agnostic_opt == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(s.e_naive_opt == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.e_opt_naive == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.e_agnostic_naive == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s.e_naive_naive == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s.coverage_opt == 1.0);
    CHECK(run.ledgers.size() == 4);

    const auto r = solve_propagation(s);
    CHECK(r.delta_e1 == doctest::Approx(0.3));
    CHECK(r.delta_e2 == doctest::Approx(0.4));
    CHECK(r.delta_e3 == doctest::Approx(0.4));
  }

  TEST_CASE("last step has no downstream") {
    const auto spec = default_image_pipeline();
    Rng rng(3);
    const auto table = make_table(spec, Restriction::everything(spec),
                                  [&](const Configuration&) { return rng.uniform(); });
    LookupObjective objective(spec, table);
    const auto run = compute_sextuple(spec, objective, step_components(spec)[2], {}, 0,
                                      exhaustive());
    CHECK(run.sextuple.e_naive_naive == run.sextuple.e_naive_opt);
    CHECK(run.sextuple.e_opt_naive == run.sextuple.e_opt_opt);
    const auto r = solve_propagation(run.sextuple);
    CHECK(r.delta_e3 == 0.0);
    CHECK(r.flags == kLastStepConvention);
    CHECK(*r.gamma == 0.0);

    const auto hp = hyperparameter_components(spec, kHir, {"rf.n_estimators"});
    const auto hp_run = compute_sextuple(spec, objective, hp[0], kHir, 0, exhaustive());
    CHECK(solve_propagation(hp_run.sextuple).delta_e3 == 0.0);
  }

  TEST_CASE("constrained restrictions") {
    const auto spec = default_image_pipeline();
    const auto comps = algorithm_components(spec, kHir);
    const auto both_naive = constrained_restriction(spec, comps[1], kHir, {true, true});
    const auto grid = enumerate_grid(spec, both_naive);
    CHECK(grid.size() == 4);
    for (const auto& c : grid) {
      CHECK(c.path[1] == "identity");
      CHECK(c.path[2] == "nn1");
      CHECK(c.path[0] == "haralick");
    }
    const auto opt = constrained_restriction(spec, step_components(spec)[0], {}, {false, false});
    CHECK(grid_size(spec, opt) == 2550);
  }

  TEST_CASE("a step without a naive algorithm is named in the error") {
    const auto spec = load_spec(R"({"metric": "cross_entropy", "folds": 5, "steps": [
      {"name": "first", "algorithms": [
        {"id": "A", "naive": false, "hyperparameters": []},
        {"id": "N", "naive": true, "hyperparameters": []}]},
      {"name": "second", "algorithms": [
        {"id": "L", "naive": false, "hyperparameters": []}]}]})");
    try {
      require_naive_algorithms(spec);
      FAIL("expected MissingNaiveError");
    } catch (const MissingNaiveError& e) {
      CHECK(std::string(e.what()).find("second") != std::string::npos);
    }
  }

  TEST_CASE("full random search reproduces grid propagation") {
    const auto spec = default_image_pipeline();
    const auto table = make_table(spec, Restriction::everything(spec), [&](const Configuration& c) {
      double loss = 0.3;
      if (c.path[0] == "haralick") loss -= 0.02 * domain_index(spec, c, 0, "distance");
      if (c.path[1] == "isomap") loss += 0.01 * domain_index(spec, c, 1, "n_neighbors");
      if (c.path[2] == "nn1") loss += 0.2;
      if (c.path[0] == "downsample8") loss += 0.15;
      return loss;
    });
    LookupObjective objective(spec, table);
    const auto comps = algorithm_components(spec, kHir);
    const auto grid = propagation_report(spec, objective, comps, kHir, {0}, exhaustive());
    const auto random = propagation_report(spec, objective, comps, kHir, {7},
                                           exhaustive(OptimizerKind::kRandom));
    REQUIRE(grid.entries.size() == random.entries.size());
    for (std::size_t i = 0; i < grid.entries.size(); ++i) {
      const auto& g = grid.entries[i].per_seed_results[0];
      const auto& r = random.entries[i].per_seed_results[0];
      CHECK(std::abs(g.delta_e1 - r.delta_e1) <= 1e-12);
      CHECK(std::abs(g.delta_e2 - r.delta_e2) <= 1e-12);
      CHECK(std::abs(g.delta_e3 - r.delta_e3) <= 1e-12);
      CHECK(g.flags == r.flags);
    }
    CHECK_THROWS(propagation_report(spec, objective, comps, kHir, {0, 1}, exhaustive()));
  }
}
