#include "pipegrader/pipeline_model.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pipegrader/random.hpp"

namespace pipegrader {
namespace {

using nlohmann::json;

constexpr std::string_view kDefaultDocument = R"({
  "metric": "cross_entropy",
  "folds": 5,
  "steps": [
    {
      "name": "feature_extraction",
      "algorithms": [
        {"id": "haralick", "naive": false, "hyperparameters": [
          {"name": "distance", "kind": "integer", "values": [1, 2, 3, 4]}
        ]},
        {"id": "cnn_frozen", "naive": false, "hyperparameters": []},
        {"id": "downsample8", "naive": true, "hyperparameters": []}
      ]
    },
    {
      "name": "feature_transformation",
      "algorithms": [
        {"id": "pca", "naive": false, "hyperparameters": [
          {"name": "whitening", "kind": "boolean", "values": [true, false]}
        ]},
        {"id": "isomap", "naive": false, "hyperparameters": [
          {"name": "n_neighbors", "kind": "integer", "values": [3, 4, 5, 6, 7]},
          {"name": "n_components", "kind": "integer", "values": [2, 3, 4]}
        ]},
        {"id": "identity", "naive": true, "hyperparameters": []}
      ]
    },
    {
      "name": "learning",
      "algorithms": [
        {"id": "rf", "naive": false, "hyperparameters": [
          {"name": "n_estimators", "kind": "integer", "values": [8, 81, 154, 227, 300]},
          {"name": "max_features", "kind": "real", "values": [0.3, 0.5, 0.7]}
        ]},
        {"id": "ksvm", "naive": false, "hyperparameters": [
          {"name": "C", "kind": "real", "values": [0.1, 25.075, 50.05, 75.025, 100.0]},
          {"name": "gamma", "kind": "real", "values": [0.3, 0.5, 0.7]}
        ]},
        {"id": "nn1", "naive": true, "hyperparameters": []}
      ]
    }
  ]
}
)";

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-';
  });
}

void require_keys(const json& object, std::initializer_list<const char*> keys,
                  std::string_view where) {
  if (!object.is_object()) {
    throw SpecError(std::string(where) + ": expected an object");
  }
  for (const auto& item : object.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
          return item.key() == k;
        }) == keys.end()) {
      throw SpecError(std::string(where) + ": unknown field '" + item.key() +
                      "'");
    }
  }
  for (const char* key : keys) {
    if (!object.contains(key)) {
      throw SpecError(std::string(where) + ": missing field '" + key + "'");
    }
  }
}

std::string value_text(const json& value, HyperparameterKind kind,
                       std::string_view where) {
  switch (kind) {
    case HyperparameterKind::kBoolean:
      if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
      if (value.is_string() &&
          (value.get<std::string>() == "true" ||
           value.get<std::string>() == "false")) {
        return value.get<std::string>();
      }
      break;
    case HyperparameterKind::kInteger:
      if (value.is_number_integer()) return value.dump();
      if (value.is_string()) {
        const auto text = value.get<std::string>();
        char* end = nullptr;
        std::strtoll(text.c_str(), &end, 10);
        if (!text.empty() && *end == '\0') return text;
      }
      break;
    case HyperparameterKind::kReal:
      if (value.is_number()) return value.dump();
      if (value.is_string()) {
        const auto text = value.get<std::string>();
        char* end = nullptr;
        std::strtod(text.c_str(), &end);
        if (!text.empty() && *end == '\0') return text;
      }
      break;
    case HyperparameterKind::kCategorical:
      if (value.is_string()) return value.get<std::string>();
      if (value.is_number() || value.is_boolean()) return value.dump();
      break;
  }
  throw SpecError(std::string(where) + ": value " + value.dump() +
                  " does not match kind " + std::string(to_string(kind)));
}

json value_json(const std::string& text, HyperparameterKind kind) {
  switch (kind) {
    case HyperparameterKind::kBoolean:
      return text == "true";
    case HyperparameterKind::kInteger:
      return json::parse(text);
    case HyperparameterKind::kReal:
    case HyperparameterKind::kCategorical:
      return text;
  }
  return text;
}

}  // namespace

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string_view to_string(HyperparameterKind kind) {
  switch (kind) {
    case HyperparameterKind::kInteger:
      return "integer";
    case HyperparameterKind::kReal:
      return "real";
    case HyperparameterKind::kBoolean:
      return "boolean";
    case HyperparameterKind::kCategorical:
      return "categorical";
  }
  return "categorical";
}

HyperparameterKind parse_hyperparameter_kind(std::string_view text) {
  if (text == "integer") return HyperparameterKind::kInteger;
  if (text == "real" || text == "real-discretized") {
    return HyperparameterKind::kReal;
  }
  if (text == "boolean") return HyperparameterKind::kBoolean;
  if (text == "categorical") return HyperparameterKind::kCategorical;
  throw SpecError("unknown hyperparameter kind '" + std::string(text) + "'");
}

std::optional<std::size_t> HyperparameterDomain::index_of(
    std::string_view value) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return i;
  }
  return std::nullopt;
}

std::size_t AlgorithmSpec::configuration_count() const {
  std::size_t count = 1;
  for (const auto& hp : hyperparameters) count *= hp.size();
  return count;
}

std::string AlgorithmSpec::qualified_name(
    const HyperparameterDomain& hp) const {
  return id + "." + hp.name;
}

const HyperparameterDomain* AlgorithmSpec::find_hyperparameter(
    std::string_view name) const {
  for (const auto& hp : hyperparameters) {
    if (hp.name == name) return &hp;
  }
  return nullptr;
}

const AlgorithmSpec* Step::find(std::string_view id) const {
  for (const auto& algorithm : algorithms) {
    if (algorithm.id == id) return &algorithm;
  }
  return nullptr;
}

const AlgorithmSpec* Step::naive() const {
  for (const auto& algorithm : algorithms) {
    if (algorithm.is_naive) return &algorithm;
  }
  return nullptr;
}

std::vector<std::string> Step::pipeline_ids() const {
  std::vector<std::string> ids;
  for (const auto& algorithm : algorithms) {
    if (!algorithm.is_naive) ids.push_back(algorithm.id);
  }
  return ids;
}

std::string path_label(const PathId& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ',';
    out += path[i];
  }
  return out;
}

PathId parse_path(std::string_view comma_separated) {
  PathId path;
  std::string current;
  for (char c : comma_separated) {
    if (c == ',') {
      path.push_back(current);
      current.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      current.push_back(c);
    }
  }
  path.push_back(current);
  return path;
}

// "<path ids joined by '>'>|<qualified>=<value>;..." with assignments in
// sorted order. Ids and names are restricted to [A-Za-z0-9_-], so the
// separators cannot collide with content.
std::string canonical_key(const Configuration& config) {
  std::string key;
  for (std::size_t i = 0; i < config.path.size(); ++i) {
    if (i) key += '>';
    key += config.path[i];
  }
  key += '|';
  bool first = true;
  for (const auto& [name, value] : config.assignments) {
    if (!first) key += ';';
    first = false;
    key += name;
    key += '=';
    key += value;
  }
  return key;
}

const AlgorithmSpec& PipelineSpec::algorithm(std::size_t step,
                                             std::string_view id) const {
  if (step >= steps.size()) {
    throw SpecError("step index " + std::to_string(step) + " out of range");
  }
  const auto* found = steps[step].find(id);
  if (!found) {
    throw SpecError("unknown algorithm '" + std::string(id) + "' in step '" +
                    steps[step].name + "'");
  }
  return *found;
}

bool PipelineSpec::has_naive_everywhere() const {
  return std::all_of(steps.begin(), steps.end(),
                     [](const Step& s) { return s.naive() != nullptr; });
}

void PipelineSpec::validate(const Configuration& config) const {
  if (config.path.size() != steps.size()) {
    throw SpecError("configuration path has " +
                    std::to_string(config.path.size()) + " entries, expected " +
                    std::to_string(steps.size()));
  }
  std::size_t expected = 0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto& alg = algorithm(s, config.path[s]);
    for (const auto& hp : alg.hyperparameters) {
      ++expected;
      auto it = config.assignments.find(alg.qualified_name(hp));
      if (it == config.assignments.end()) {
        throw SpecError("missing value for " + alg.qualified_name(hp));
      }
      if (!hp.index_of(it->second)) {
        throw SpecError("value '" + it->second + "' not in domain of " +
                        alg.qualified_name(hp));
      }
    }
  }
  if (config.assignments.size() != expected) {
    throw SpecError("configuration assigns inactive hyperparameters");
  }
}

std::string PipelineSpec::to_json() const {
  json doc;
  doc["metric"] = metric;
  doc["folds"] = folds;
  doc["steps"] = json::array();
  for (const auto& step : steps) {
    json js{{"name", step.name}, {"algorithms", json::array()}};
    for (const auto& alg : step.algorithms) {
      json ja{{"id", alg.id},
              {"naive", alg.is_naive},
              {"hyperparameters", json::array()}};
      for (const auto& hp : alg.hyperparameters) {
        json values = json::array();
        for (const auto& v : hp.values) values.push_back(value_json(v, hp.kind));
        ja["hyperparameters"].push_back(
            {{"name", hp.name}, {"kind", to_string(hp.kind)}, {"values", values}});
      }
      js["algorithms"].push_back(std::move(ja));
    }
    doc["steps"].push_back(std::move(js));
  }
  return doc.dump();
}

std::string PipelineSpec::fingerprint() const {
  return hex64(fnv1a64(to_json()));
}

PipelineSpec load_spec(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("spec is not valid JSON: ") + e.what());
  }
  require_keys(doc, {"steps", "metric", "folds"}, "spec");
  PipelineSpec spec;
  if (!doc["metric"].is_string()) throw SpecError("spec: metric must be a string");
  spec.metric = doc["metric"].get<std::string>();
  if (spec.metric != "cross_entropy") {
    throw SpecError("spec: unsupported metric '" + spec.metric + "'");
  }
  if (!doc["folds"].is_number_integer() || doc["folds"].get<int>() < 2) {
    throw SpecError("spec: folds must be an integer >= 2");
  }
  spec.folds = doc["folds"].get<int>();
  if (!doc["steps"].is_array() || doc["steps"].empty()) {
    throw SpecError("spec: steps must be a non-empty array");
  }
  std::set<std::string> ids;
  for (const auto& js : doc["steps"]) {
    require_keys(js, {"name", "algorithms"}, "step");
    Step step;
    step.name = js["name"].get<std::string>();
    const std::string where = "step '" + step.name + "'";
    if (!js["algorithms"].is_array() || js["algorithms"].empty()) {
      throw SpecError(where + " has no algorithms");
    }
    for (const auto& ja : js["algorithms"]) {
      require_keys(ja, {"id", "naive", "hyperparameters"}, where + " algorithm");
      AlgorithmSpec alg;
      alg.id = ja["id"].get<std::string>();
      alg.step_index = spec.steps.size();
      if (!ja["naive"].is_boolean()) {
        throw SpecError(where + ": 'naive' must be a boolean");
      }
      alg.is_naive = ja["naive"].get<bool>();
      if (!is_identifier(alg.id)) {
        throw SpecError(where + ": invalid algorithm id '" + alg.id + "'");
      }
      if (!ids.insert(alg.id).second) {
        throw SpecError(where + ": duplicate algorithm id '" + alg.id + "'");
      }
      if (!ja["hyperparameters"].is_array()) {
        throw SpecError(where + ": hyperparameters must be an array");
      }
      std::set<std::string> names;
      for (const auto& jh : ja["hyperparameters"]) {
        require_keys(jh, {"name", "kind", "values"}, alg.id + " hyperparameter");
        HyperparameterDomain hp;
        hp.name = jh["name"].get<std::string>();
        if (!is_identifier(hp.name)) {
          throw SpecError(alg.id + ": invalid hyperparameter name '" +
                          hp.name + "'");
        }
        if (!names.insert(hp.name).second) {
          throw SpecError(alg.id + ": duplicate hyperparameter '" + hp.name +
                          "'");
        }
        hp.kind = parse_hyperparameter_kind(jh["kind"].get<std::string>());
        if (!jh["values"].is_array() || jh["values"].empty()) {
          throw SpecError(alg.id + "." + hp.name + ": empty domain");
        }
        std::set<std::string> seen;
        for (const auto& jv : jh["values"]) {
          auto text = value_text(jv, hp.kind, alg.id + "." + hp.name);
          if (!seen.insert(text).second) {
            throw SpecError(alg.id + "." + hp.name + ": duplicate value " +
                            text);
          }
          hp.values.push_back(std::move(text));
        }
        alg.hyperparameters.push_back(std::move(hp));
      }
      if (alg.is_naive && !alg.hyperparameters.empty()) {
        throw SpecError(where + ": naive algorithm '" + alg.id +
                        "' must not carry hyperparameters");
      }
      step.algorithms.push_back(std::move(alg));
    }
    const auto naive_count =
        std::count_if(step.algorithms.begin(), step.algorithms.end(),
                      [](const AlgorithmSpec& a) { return a.is_naive; });
    if (naive_count > 1) {
      throw SpecError(where + " has more than one naive algorithm");
    }
    if (static_cast<std::size_t>(naive_count) == step.algorithms.size()) {
      throw SpecError(where + " has no non-naive algorithm");
    }
    spec.steps.push_back(std::move(step));
  }
  return spec;
}

PipelineSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_spec(buffer.str());
}

std::string_view default_image_pipeline_document() { return kDefaultDocument; }

PipelineSpec default_image_pipeline() { return load_spec(kDefaultDocument); }

Restriction Restriction::cash(const PipelineSpec& spec) {
  Restriction r;
  r.allowed.resize(spec.num_steps());
  return r;
}

Restriction Restriction::on_path(const PathId& path) {
  Restriction r;
  for (const auto& id : path) r.allowed.push_back({id});
  return r;
}

Restriction Restriction::everything(const PipelineSpec& spec) {
  Restriction r;
  for (const auto& step : spec.steps) {
    std::vector<std::string> ids;
    for (const auto& alg : step.algorithms) ids.push_back(alg.id);
    r.allowed.push_back(std::move(ids));
  }
  return r;
}

std::string Restriction::key() const {
  std::string out;
  for (std::size_t s = 0; s < allowed.size(); ++s) {
    if (s) out += '>';
    if (allowed[s].empty()) {
      out += '*';
    } else {
      for (std::size_t i = 0; i < allowed[s].size(); ++i) {
        if (i) out += '+';
        out += allowed[s][i];
      }
    }
  }
  for (const auto& [name, value] : fixed) out += ";" + name + "=" + value;
  return out;
}

bool Restriction::admits(const PipelineSpec& spec,
                         const Configuration& config) const {
  if (config.path.size() != spec.num_steps()) return false;
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    const auto* alg = spec.steps[s].find(config.path[s]);
    if (!alg) return false;
    const bool all = allowed.empty() || allowed[s].empty();
    if (all ? alg->is_naive
            : std::find(allowed[s].begin(), allowed[s].end(), alg->id) ==
                  allowed[s].end()) {
      return false;
    }
    for (const auto& hp : alg->hyperparameters) {
      auto f = fixed.find(alg->qualified_name(hp));
      if (f == fixed.end()) continue;
      auto a = config.assignments.find(f->first);
      if (a == config.assignments.end() || a->second != f->second) return false;
    }
  }
  return true;
}

namespace {

std::vector<std::vector<const AlgorithmSpec*>> resolve(
    const PipelineSpec& spec, const Restriction& restriction) {
  std::vector<std::vector<const AlgorithmSpec*>> per_step(spec.num_steps());
  if (!restriction.allowed.empty() &&
      restriction.allowed.size() != spec.num_steps()) {
    throw SpecError("restriction covers " +
                    std::to_string(restriction.allowed.size()) +
                    " steps, pipeline has " + std::to_string(spec.num_steps()));
  }
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    const bool all = restriction.allowed.empty() || restriction.allowed[s].empty();
    if (all) {
      for (const auto& alg : spec.steps[s].algorithms) {
        if (!alg.is_naive) per_step[s].push_back(&alg);
      }
      continue;
    }
    // Spec order, not restriction order, so enumeration is canonical.
    for (const auto& alg : spec.steps[s].algorithms) {
      if (std::find(restriction.allowed[s].begin(), restriction.allowed[s].end(),
                    alg.id) != restriction.allowed[s].end()) {
        per_step[s].push_back(&alg);
      }
    }
    for (const auto& id : restriction.allowed[s]) {
      if (!spec.steps[s].find(id)) {
        throw SpecError("restriction names unknown algorithm '" + id +
                        "' in step '" + spec.steps[s].name + "'");
      }
    }
  }
  for (const auto& [name, value] : restriction.fixed) {
    bool known = false;
    for (const auto& step : spec.steps) {
      for (const auto& alg : step.algorithms) {
        for (const auto& hp : alg.hyperparameters) {
          if (alg.qualified_name(hp) == name) {
            known = true;
            if (!hp.index_of(value)) {
              throw SpecError("restriction value '" + value +
                              "' not in domain of " + name);
            }
          }
        }
      }
    }
    if (!known) {
      throw SpecError("restriction names unknown hyperparameter '" + name + "'");
    }
  }
  return per_step;
}

// Domain values of `hp` admitted by the restriction.
std::vector<std::string> admitted_values(const AlgorithmSpec& alg,
                                         const HyperparameterDomain& hp,
                                         const Restriction& restriction) {
  auto it = restriction.fixed.find(alg.qualified_name(hp));
  if (it != restriction.fixed.end()) return {it->second};
  return hp.values;
}

std::size_t admitted_count(const AlgorithmSpec& alg,
                           const Restriction& restriction) {
  std::size_t count = 1;
  for (const auto& hp : alg.hyperparameters) {
    count *= admitted_values(alg, hp, restriction).size();
  }
  return count;
}

}  // namespace

std::vector<PathId> enumerate_paths(const PipelineSpec& spec,
                                    bool include_naive) {
  std::vector<PathId> paths{{}};
  for (const auto& step : spec.steps) {
    std::vector<PathId> next;
    for (const auto& prefix : paths) {
      for (const auto& alg : step.algorithms) {
        if (alg.is_naive && !include_naive) continue;
        auto path = prefix;
        path.push_back(alg.id);
        next.push_back(std::move(path));
      }
    }
    paths = std::move(next);
  }
  return paths;
}

std::vector<Configuration> enumerate_grid(const PipelineSpec& spec,
                                          const Restriction& restriction) {
  const auto per_step = resolve(spec, restriction);
  std::vector<Configuration> out;
  out.reserve(grid_size(spec, restriction));
  // Odometer over (algorithm choice, hyperparameter values) per step; the
  // last step's last hyperparameter varies fastest.
  std::vector<Configuration> partial{{}};
  for (std::size_t s = 0; s < spec.num_steps(); ++s) {
    std::vector<Configuration> next;
    for (const auto& prefix : partial) {
      for (const auto* alg : per_step[s]) {
        std::vector<Configuration> local{prefix};
        local.front().path.push_back(alg->id);
        for (const auto& hp : alg->hyperparameters) {
          std::vector<Configuration> expanded;
          for (const auto& c : local) {
            for (const auto& value : admitted_values(*alg, hp, restriction)) {
              auto copy = c;
              copy.assignments[alg->qualified_name(hp)] = value;
              expanded.push_back(std::move(copy));
            }
          }
          local = std::move(expanded);
        }
        for (auto& c : local) next.push_back(std::move(c));
      }
    }
    partial = std::move(next);
  }
  out = std::move(partial);
  return out;
}

std::vector<Configuration> enumerate_grid(const PipelineSpec& spec) {
  return enumerate_grid(spec, Restriction::cash(spec));
}

std::size_t grid_size(const PipelineSpec& spec, const Restriction& restriction) {
  const auto per_step = resolve(spec, restriction);
  std::size_t total = 1;
  for (const auto& algorithms : per_step) {
    std::size_t step_total = 0;
    for (const auto* alg : algorithms) step_total += admitted_count(*alg, restriction);
    total *= step_total;
  }
  return total;
}

std::string prefix_key(const Configuration& config, std::size_t length,
                       const PipelineSpec& spec) {
  Configuration prefix;
  for (std::size_t s = 0; s < length && s < config.path.size(); ++s) {
    prefix.path.push_back(config.path[s]);
    const auto& alg = spec.algorithm(s, config.path[s]);
    for (const auto& hp : alg.hyperparameters) {
      const auto name = alg.qualified_name(hp);
      prefix.assignments[name] = config.assignments.at(name);
    }
  }
  return canonical_key(prefix);
}

PathId default_analysis_path(const PipelineSpec& spec) {
  PathId best;
  std::size_t best_count = 0;
  for (const auto& path : enumerate_paths(spec, false)) {
    std::size_t count = 0;
    for (std::size_t s = 0; s < path.size(); ++s) {
      count += spec.algorithm(s, path[s]).hyperparameters.size();
    }
    if (best.empty() || count > best_count) {
      best = path;
      best_count = count;
    }
  }
  return best;
}

}  // namespace pipegrader
