#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pipegrader/attribution.hpp"
#include "pipegrader/optimizers.hpp"
#include "pipegrader/propagation.hpp"

namespace pipegrader {

inline constexpr const char* kToolVersion = "0.1.0";

nlohmann::json to_json(const SearchResult& result);
nlohmann::json to_json(const ContributionReport& report);
nlohmann::json to_json(const PropagationReport& report);
nlohmann::json to_json(const NaiveErrorSextuple& s);
nlohmann::json to_json(const PropagationResult& r);

/// `component,mean,std,coverage,estimator`, one row per component.
std::string contribution_csv(const ContributionReport& report);
/// Aggregated propagation fields, one row per component.
std::string propagation_csv(const PropagationReport& report);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side has no rank variance (unless both rankings are identical).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Compares report documents (as written by to_json) of one scope. Every
/// report after the first is compared against the first on `field`
/// ("mean" for contribution reports; a propagation summary field such as
/// "e_direct" for propagation reports). Throws std::invalid_argument on a
/// kind or scope mismatch.
nlohmann::json compare_reports(const std::vector<nlohmann::json>& reports,
                               const std::string& field = "");

/// Removes every "wall_time" member, recursively.
nlohmann::json strip_wall_time(nlohmann::json document);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);
/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& document);

}  // namespace pipegrader
