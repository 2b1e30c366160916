#include "pipegrader/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pipegrader {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_number(const std::optional<double>& v) {
  return v ? number_or_null(*v) : json(nullptr);
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

json to_json(const SearchResult& result) {
  return {{"optimizer", std::string(to_string(result.optimizer))},
          {"best_key", result.best_key},
          {"best_loss", number_or_null(result.best_loss)},
          {"trials", result.trial_sequence.size()},
          {"trial_sequence", result.trial_sequence},
          {"terminated_by", std::string(to_string(result.terminated_by))}};
}

json to_json(const ContributionReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json cells = json::object();
    for (const auto& [cell, v] : e.cell_minima) cells[cell] = number_or_null(v);
    json per_seed = json::array();
    for (double v : e.per_seed) per_seed.push_back(number_or_null(v));
    entries.push_back({{"component", e.component},
                       {"contribution", number_or_null(e.contribution)},
                       {"mean", number_or_null(e.mean)},
                       {"std", number_or_null(e.std)},
                       {"per_seed", per_seed},
                       {"coverage", e.coverage},
                       {"missing_cells", e.missing_cells},
                       {"cell_minima", cells}});
  }
  return {{"kind", "contribution"},
          {"scope", std::string(to_string(report.scope))},
          {"path", report.path},
          {"estimator", std::string(to_string(report.estimator))},
          {"seeds", report.seeds},
          {"reference_min", number_or_null(report.reference_min)},
          {"per_seed_reference", report.per_seed_reference},
          {"entries", entries}};
}

json to_json(const NaiveErrorSextuple& s) {
  return {{"e_opt_opt", s.e_opt_opt},
          {"e_agnostic_opt", number_or_null(s.e_agnostic_opt)},
          {"e_naive_opt", s.e_naive_opt},
          {"e_opt_naive", s.e_opt_naive},
          {"e_naive_naive", s.e_naive_naive},
          {"e_agnostic_naive", number_or_null(s.e_agnostic_naive)},
          {"coverage_opt", s.coverage_opt},
          {"coverage_naive", s.coverage_naive}};
}

json to_json(const PropagationResult& r) {
  return {{"delta_e1", number_or_null(r.delta_e1)},
          {"delta_e2", number_or_null(r.delta_e2)},
          {"delta_e3", number_or_null(r.delta_e3)},
          {"e_direct", optional_number(r.e_direct)},
          {"e_propagation", optional_number(r.e_propagation)},
          {"gamma", optional_number(r.gamma)},
          {"flags", flag_names(r.flags)}};
}

json to_json(const PropagationReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json summary = json::object();
    for (const auto& [name, f] : e.summary) {
      summary[name] = f.count ? json{{"mean", number_or_null(f.mean)},
                                     {"std", number_or_null(f.std)},
                                     {"count", f.count}}
                              : json{{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
    }
    json seeds = json::array();
    for (std::size_t i = 0; i < e.per_seed_results.size(); ++i) {
      seeds.push_back({{"errors", to_json(e.per_seed_sextuples[i])},
                       {"result", to_json(e.per_seed_results[i])}});
    }
    entries.push_back({{"component", e.component},
                       {"summary", summary},
                       {"flags_any", flag_names(e.flags_any)},
                       {"flags_all", flag_names(e.per_seed_results.empty() ? 0u : e.flags_all)},
                       {"per_seed", seeds}});
  }
  return {{"kind", "propagation"},
          {"scope", std::string(to_string(report.scope))},
          {"path", report.path},
          {"estimator", std::string(to_string(report.estimator))},
          {"seeds", report.seeds},
          {"epsilon", report.epsilon},
          {"entries", entries}};
}

std::string contribution_csv(const ContributionReport& report) {
  std::ostringstream out;
  out << "component,mean,std,coverage,estimator\n";
  for (const auto& e : report.entries) {
    out << csv_field(e.component) << ',' << csv_number(e.mean) << ',' << csv_number(e.std)
        << ',' << csv_number(e.coverage) << ',' << to_string(report.estimator) << '\n';
  }
  return out.str();
}

std::string propagation_csv(const PropagationReport& report) {
  static const std::vector<std::string> kFields = {
      "e_opt_opt",     "e_agnostic_opt", "e_naive_opt", "e_opt_naive",
      "e_naive_naive", "e_agnostic_naive", "delta_e1",  "delta_e2",
      "delta_e3",      "e_direct",       "e_propagation", "gamma"};
  std::ostringstream out;
  out << "component";
  for (const auto& f : kFields) out << ',' << f << "_mean," << f << "_std";
  out << ",flags,estimator\n";
  for (const auto& e : report.entries) {
    out << csv_field(e.component);
    for (const auto& f : kFields) {
      auto it = e.summary.find(f);
      if (it == e.summary.end() || it->second.count == 0) {
        out << ",,";
      } else {
        out << ',' << csv_number(it->second.mean) << ',' << csv_number(it->second.std);
      }
    }
    std::string flags;
    for (const auto& name : flag_names(e.flags_any)) flags += (flags.empty() ? "" : ";") + name;
    out << ',' << flags << ',' << to_string(report.estimator) << '\n';
  }
  return out.str();
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("Spearman correlation needs two equal-length series");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  if (ra == rb) return 1.0;
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::map<std::string, double> report_values(const json& report, const std::string& field) {
  std::map<std::string, double> out;
  const bool propagation = report.at("kind") == "propagation";
  for (const auto& e : report.at("entries")) {
    const json& v = propagation ? e.at("summary").at(field).at("mean") : e.at(field);
    out[e.at("component").get<std::string>()] =
        v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  }
  return out;
}

}  // namespace

json compare_reports(const std::vector<json>& reports, const std::string& field) {
  if (reports.size() < 2) throw std::invalid_argument("compare needs at least two reports");
  const auto& first = reports.front();
  const std::string kind = first.at("kind");
  const std::string scope = first.at("scope");
  const std::string metric =
      !field.empty() ? field : (kind == "propagation" ? "e_direct" : "mean");
  for (const auto& r : reports) {
    if (r.at("kind") != kind || r.at("scope") != scope) {
      throw std::invalid_argument("reports differ in kind or scope");
    }
  }
  const auto base = report_values(first, metric);
  json comparisons = json::array();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto other = report_values(reports[i], metric);
    if (other.size() != base.size()) {
      throw std::invalid_argument("reports cover different components");
    }
    json rows = json::array();
    std::vector<double> a, b;
    double max_diff = 0.0;
    for (const auto& [component, value] : base) {
      auto it = other.find(component);
      if (it == other.end()) {
        throw std::invalid_argument("component '" + component + "' missing from report");
      }
      const double diff = std::abs(value - it->second);
      max_diff = std::max(max_diff, diff);
      rows.push_back({{"component", component},
                      {"reference", number_or_null(value)},
                      {"other", number_or_null(it->second)},
                      {"abs_diff", number_or_null(diff)}});
      a.push_back(value);
      b.push_back(it->second);
    }
    double rho = std::numeric_limits<double>::quiet_NaN();
    if (a.size() >= 2) rho = spearman(a, b);
    json entry = {{"index", i},
                  {"estimator", reports[i].value("estimator", "")},
                  {"rows", rows},
                  {"max_abs_diff", number_or_null(max_diff)},
                  {"spearman", number_or_null(rho)}};
    comparisons.push_back(entry);
  }
  return {{"kind", kind},
          {"scope", scope},
          {"field", metric},
          {"reference_estimator", first.value("estimator", "")},
          {"comparisons", comparisons}};
}

json strip_wall_time(json document) {
  if (document.is_object()) {
    document.erase("wall_time");
    for (auto& item : document.items()) item.value() = strip_wall_time(item.value());
  } else if (document.is_array()) {
    for (auto& value : document) value = strip_wall_time(value);
  }
  return document;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string dump_json(const json& document) { return document.dump(2) + "\n"; }

}  // namespace pipegrader
