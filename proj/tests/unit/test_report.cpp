#include <doctest.h>

#include <cmath>

#include "pipegrader/report.hpp"

using namespace pipegrader;
using nlohmann::json;

namespace {

json contribution_doc(const std::vector<std::pair<std::string, double>>& values,
                      const std::string& estimator) {
  ContributionReport r;
  r.estimator = parse_optimizer(estimator);
  for (const auto& [name, v] : values) {
    ContributionEntry e;
    e.component = name;
    e.contribution = e.mean = v;
    r.entries.push_back(e);
  }
  return to_json(r);
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("spearman") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 1, 2}, {1, 1, 2}) == 1.0);
    CHECK(spearman({1, 1, 2, 3}, {1, 2, 2, 3}) == doctest::Approx(3.75 / 4.5));
    CHECK(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
    CHECK_THROWS(spearman({1}, {1}));
  }

  TEST_CASE("compare reports") {
    const auto a = contribution_doc({{"x", 0.1}, {"y", 0.3}, {"z", 0.2}}, "grid");
    const auto b = contribution_doc({{"x", 0.12}, {"y", 0.25}, {"z", 0.2}}, "random");
    const auto cmp = compare_reports({a, b});
    CHECK(cmp["field"] == "mean");
    const auto& c = cmp["comparisons"][0];
    CHECK(c["estimator"] == "random");
    CHECK(c["spearman"].get<double>() == doctest::Approx(1.0));
    CHECK(c["max_abs_diff"].get<double>() == doctest::Approx(0.05));
    CHECK(c["rows"].size() == 3);
    const auto missing = contribution_doc({{"x", 0.1}, {"y", 0.3}}, "random");
    CHECK_THROWS(compare_reports({a, missing}));
    CHECK_THROWS(compare_reports({a}));
  }

  TEST_CASE("wall_time stripping is recursive") {
    const json doc = {{"wall_time", 1.0},
                      {"runs", json::array({{{"wall_time", 2.0}, {"best", 0.1}}})}};
    const auto stripped = strip_wall_time(doc);
    CHECK_FALSE(stripped.contains("wall_time"));
    CHECK_FALSE(stripped["runs"][0].contains("wall_time"));
    CHECK(stripped["runs"][0]["best"] == 0.1);
  }

  TEST_CASE("CSV rendering and null handling") {
    ContributionReport r;
    r.estimator = OptimizerKind::kSmbo;
    ContributionEntry e;
    e.component = "a,b";
    e.contribution = e.mean = std::numeric_limits<double>::quiet_NaN();
    e.coverage = 0.0;
    r.entries.push_back(e);
    const auto csv = contribution_csv(r);
    CHECK(csv == "component,mean,std,coverage,estimator\n\"a,b\",,0,0,smbo\n");
    CHECK(to_json(r)["entries"][0]["mean"].is_null());

    PropagationResult degenerate;
    degenerate.flags = kDegenerateDenominator;
    const auto j = to_json(degenerate);
    CHECK(j["gamma"].is_null());
    CHECK(j["flags"] == json::array({"degenerate-denominator"}));
  }
}
