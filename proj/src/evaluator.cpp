#include "pipegrader/evaluator.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pipegrader/random.hpp"

namespace pipegrader {

using nlohmann::json;

constexpr std::string_view kLedgerFormat = "pipegrader-ledger-1";

bool TrialRecord::same_result(const TrialRecord& other) const {
  return key == other.key && config == other.config &&
         fold_losses == other.fold_losses && mean_loss == other.mean_loss &&
         seed == other.seed && failed == other.failed && error == other.error;
}

// --- TrialLedger ---------------------------------------------------------------

TrialLedger::TrialLedger(LedgerFingerprints fingerprints)
    : fingerprints_(std::move(fingerprints)) {}

TrialLedger::TrialLedger(const TrialLedger& other) {
  std::lock_guard lock(other.mutex_);
  fingerprints_ = other.fingerprints_;
  records_ = other.records_;
  index_ = other.index_;
}

TrialLedger& TrialLedger::operator=(const TrialLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  fingerprints_ = other.fingerprints_;
  records_ = other.records_;
  index_ = other.index_;
  return *this;
}

bool TrialLedger::insert(TrialRecord record) {
  std::lock_guard lock(mutex_);
  if (index_.count(record.key)) return false;
  index_.emplace(record.key, records_.size());
  records_.push_back(std::move(record));
  return true;
}

bool TrialLedger::contains(const std::string& key) const {
  std::lock_guard lock(mutex_);
  return index_.count(key) > 0;
}

std::optional<TrialRecord> TrialLedger::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

std::size_t TrialLedger::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<TrialRecord> TrialLedger::records() const {
  std::lock_guard lock(mutex_);
  return {records_.begin(), records_.end()};
}

std::vector<std::string> TrialLedger::keys() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.key);
  return out;
}

TrialLedger TrialLedger::subset(const std::vector<std::string>& keys) const {
  const std::set<std::string> wanted(keys.begin(), keys.end());
  return filter([&](const TrialRecord& r) { return wanted.count(r.key) > 0; });
}

TrialLedger TrialLedger::filter(
    const std::function<bool(const TrialRecord&)>& keep) const {
  TrialLedger out(fingerprints_);
  for (auto& r : records()) {
    if (keep(r)) out.insert(std::move(r));
  }
  return out;
}

void TrialLedger::merge(const TrialLedger& other) {
  if (!(fingerprints_ == other.fingerprints_)) {
    throw EvaluationError("cannot merge ledgers with different fingerprints");
  }
  for (auto& r : other.records()) {
    if (auto mine = find(r.key)) {
      if (!mine->same_result(r)) {
        throw EvaluationError("conflicting records for key " + r.key);
      }
      continue;
    }
    insert(std::move(r));
  }
}

namespace {

json record_to_json(const TrialRecord& r) {
  json j;
  j["key"] = r.key;
  j["path"] = r.config.path;
  j["assignments"] = r.config.assignments;
  j["fold_losses"] = r.fold_losses;
  j["mean_loss"] = r.mean_loss;
  j["seed"] = r.seed;
  j["failed"] = r.failed;
  if (r.failed) j["error"] = r.error;
  j["wall_time"] = r.wall_time;
  return j;
}

TrialRecord record_from_json(const json& j) {
  TrialRecord r;
  r.key = j.at("key").get<std::string>();
  r.config.path = j.at("path").get<PathId>();
  r.config.assignments = j.at("assignments").get<std::map<std::string, std::string>>();
  r.fold_losses = j.at("fold_losses").get<std::vector<double>>();
  r.mean_loss = j.at("mean_loss").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.failed = j.at("failed").get<bool>();
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  r.wall_time = j.value("wall_time", 0.0);
  if (canonical_key(r.config) != r.key) {
    throw EvaluationError("ledger record key does not match its configuration: " + r.key);
  }
  return r;
}

}  // namespace

std::string TrialLedger::to_jsonl() const {
  std::ostringstream out;
  json header;
  header["format"] = kLedgerFormat;
  header["spec_fingerprint"] = fingerprints_.spec;
  header["dataset_fingerprint"] = fingerprints_.dataset;
  header["fold_fingerprint"] = fingerprints_.folds;
  out << header.dump() << '\n';
  for (const auto& r : records()) out << record_to_json(r).dump() << '\n';
  return out.str();
}

TrialLedger TrialLedger::from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw EvaluationError("ledger is empty");
  TrialLedger ledger;
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != kLedgerFormat) {
      throw EvaluationError("unrecognised ledger format");
    }
    ledger.fingerprints_ = {header.at("spec_fingerprint").get<std::string>(),
                            header.at("dataset_fingerprint").get<std::string>(),
                            header.at("fold_fingerprint").get<std::string>()};
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ledger.insert(record_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw EvaluationError(std::string("malformed ledger: ") + e.what());
  }
  return ledger;
}

void TrialLedger::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvaluationError("cannot write ledger " + path);
  out << to_jsonl();
}

TrialLedger TrialLedger::load(const std::string& path,
                              const std::optional<LedgerFingerprints>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaluationError("cannot read ledger " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  auto ledger = from_jsonl(buffer.str());
  if (expected && !(ledger.fingerprints() == *expected)) {
    throw EvaluationError("ledger " + path + " was produced for a different "
                          "spec, dataset or fold plan");
  }
  return ledger;
}

// --- Lookup and function objectives -----------------------------------------------

LookupObjective::LookupObjective(const PipelineSpec& spec,
                                 std::map<std::string, double> table, int folds)
    : table_(std::move(table)), folds_(folds) {
  std::uint64_t h = kFnvOffset;
  char buf[32];
  for (const auto& [k, v] : table_) {
    h = fnv1a64(k, h);
    std::snprintf(buf, sizeof buf, "=%.17g;", v);
    h = fnv1a64(buf, h);
  }
  fingerprints_ = {spec.fingerprint(), "lookup:" + hex64(h),
                   "constant-folds:" + std::to_string(folds)};
}

FoldOutcome LookupObjective::run(const Configuration& config, std::uint64_t) const {
  const auto key = canonical_key(config);
  auto it = table_.find(key);
  if (it == table_.end()) throw EvaluationError("lookup table has no entry for " + key);
  return {std::vector<double>(static_cast<std::size_t>(folds_), it->second), false, {}};
}

FunctionObjective::FunctionObjective(const PipelineSpec& spec,
                                     std::function<double(const Configuration&)> loss,
                                     std::string label, int folds)
    : loss_(std::move(loss)), folds_(folds) {
  fingerprints_ = {spec.fingerprint(), "function:" + label,
                   "constant-folds:" + std::to_string(folds)};
}

FoldOutcome FunctionObjective::run(const Configuration& config, std::uint64_t) const {
  return {std::vector<double>(static_cast<std::size_t>(folds_), loss_(config)), false, {}};
}

TrialRecord lookup_evaluate(const Configuration& config,
                            const std::map<std::string, double>& table, int folds) {
  auto it = table.find(canonical_key(config));
  if (it == table.end()) {
    throw EvaluationError("lookup table has no entry for " + canonical_key(config));
  }
  TrialRecord r;
  r.key = it->first;
  r.config = config;
  r.fold_losses.assign(static_cast<std::size_t>(folds), it->second);
  r.mean_loss = it->second;
  return r;
}

// --- Pipeline objective ----------------------------------------------------------

struct PipelineObjective::Stage {
  FeatureMatrix train;
  FeatureMatrix valid;
};

PipelineObjective::PipelineObjective(const PipelineSpec& spec, ImageDataset data,
                                     FoldPlan plan, PipelineObjectiveOptions options)
    : spec_(spec), data_(std::move(data)), plan_(std::move(plan)), options_(options) {
  if (spec_.num_steps() < 2) {
    throw SpecError("an image pipeline needs an extraction and a learning step");
  }
  if (plan_.fold_assignment.size() != data_.size()) {
    throw DatasetError("fold plan does not match the dataset size");
  }
  for (std::size_t s = 0; s < spec_.num_steps(); ++s) {
    const auto expected = s == 0 ? ComponentRole::kFeatureExtraction
                          : s + 1 == spec_.num_steps() ? ComponentRole::kLearning
                                                       : ComponentRole::kFeatureTransformation;
    for (const auto& alg : spec_.steps[s].algorithms) {
      if (!is_known_component(alg.id)) {
        throw SpecError("step '" + spec_.steps[s].name + "': no implementation for '" +
                        alg.id + "'");
      }
      if (component_role(alg.id) != expected) {
        throw SpecError("step '" + spec_.steps[s].name + "': '" + alg.id + "' is a " +
                        std::string(to_string(component_role(alg.id))) +
                        " component, expected " + std::string(to_string(expected)));
      }
    }
  }
  for (int f = 0; f < plan_.k; ++f) {
    const auto tr = plan_.train_indices(f);
    const auto va = plan_.valid_indices(f);
    train_parts_.push_back(data_.subset(tr));
    valid_parts_.push_back(data_.subset(va));
  }
}

PipelineObjective::~PipelineObjective() = default;

double PipelineObjective::failure_penalty() const {
  return 10.0 * std::log(std::max(2, data_.num_classes()));
}

LedgerFingerprints PipelineObjective::fingerprints() const {
  return {spec_.fingerprint(), data_.fingerprint(),
          plan_.fingerprint() + ";seed=" + hex64(options_.seed) +
              (options_.standardize ? "" : ";raw")};
}

ParameterValues PipelineObjective::parameters(const Configuration& config,
                                              std::size_t step) const {
  const auto& alg = spec_.algorithm(step, config.path[step]);
  ParameterValues out;
  for (const auto& hp : alg.hyperparameters) {
    out[hp.name] = config.assignments.at(alg.qualified_name(hp));
  }
  return out;
}

PipelineObjective::StagePtr PipelineObjective::compute_stage(
    const Configuration& config, std::size_t length, int fold) const {
  const std::size_t step = length - 1;
  const auto& id = config.path[step];
  {
    std::lock_guard lock(cache_mutex_);
    ++counts_[prefix_key(config, length, spec_)];
    ++algorithm_counts_[{length, id}];
  }
  auto component = make_component(id, parameters(config, step), 0);
  auto out = std::make_shared<Stage>();
  if (step == 0) {
    const auto& extractor = std::get<std::unique_ptr<Extractor>>(component);
    out->train = extractor->extract(train_parts_[static_cast<std::size_t>(fold)].images);
    out->valid = extractor->extract(valid_parts_[static_cast<std::size_t>(fold)].images);
  } else {
    const auto parent = stage(config, length - 1, fold);
    auto& transformer = std::get<std::unique_ptr<Transformer>>(component);
    transformer->fit(parent->train);
    out->train = transformer->transform(parent->train);
    out->valid = transformer->transform(parent->valid);
  }
  if (!out->train.allFinite() || !out->valid.allFinite()) {
    throw ComponentError("'" + id + "' produced non-finite features");
  }
  return out;
}

PipelineObjective::StagePtr PipelineObjective::stage(const Configuration& config,
                                                     std::size_t length,
                                                     int fold) const {
  if (!options_.prefix_cache) return compute_stage(config, length, fold);
  const auto key = prefix_key(config, length, spec_) + "#" + std::to_string(fold);
  std::promise<StagePtr> promise;
  {
    std::unique_lock lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      auto future = it->second;
      lock.unlock();
      return future.get();
    }
    cache_.emplace(key, promise.get_future().share());
  }
  try {
    auto result = compute_stage(config, length, fold);
    promise.set_value(result);
    return result;
  } catch (...) {
    promise.set_exception(std::current_exception());
    throw;
  }
}

double PipelineObjective::fold_loss(const Configuration& config, int fold,
                                    std::uint64_t trial_seed) const {
  const std::size_t last = spec_.num_steps() - 1;
  const auto features = stage(config, last, fold);
  FeatureMatrix train = features->train;
  FeatureMatrix valid = features->valid;
  if (options_.standardize) {
    const auto scaler = Standardizer::fit(train);
    train = scaler.transform(train);
    valid = scaler.transform(valid);
  }
  auto component = make_component(config.path[last], parameters(config, last),
                                   mix_seed(trial_seed, static_cast<std::uint64_t>(fold)));
  auto& learner = std::get<std::unique_ptr<Learner>>(component);
  const auto& tr = train_parts_[static_cast<std::size_t>(fold)];
  const auto& va = valid_parts_[static_cast<std::size_t>(fold)];
  learner->fit(train, tr.labels, data_.num_classes());
  const Eigen::MatrixXd probs = learner->predict_proba(valid);
  if (!probs.allFinite()) {
    throw ComponentError("'" + config.path[last] + "' produced non-finite probabilities");
  }
  return cross_entropy(probs, va.labels);
}

FoldOutcome PipelineObjective::run(const Configuration& config,
                                   std::uint64_t trial_seed) const {
  spec_.validate(config);
  FoldOutcome outcome;
  try {
    for (int f = 0; f < plan_.k; ++f) {
      outcome.losses.push_back(fold_loss(config, f, trial_seed));
    }
  } catch (const std::exception& e) {
    outcome.failed = true;
    outcome.error = e.what();
    outcome.losses.clear();
  }
  return outcome;
}

std::map<std::string, std::size_t> PipelineObjective::prefix_cache_stats() const {
  std::lock_guard lock(cache_mutex_);
  return counts_;
}

std::size_t PipelineObjective::executions(std::size_t length,
                                          const std::string& algorithm_id) const {
  std::lock_guard lock(cache_mutex_);
  auto it = algorithm_counts_.find({length, algorithm_id});
  return it == algorithm_counts_.end() ? 0 : it->second;
}

// --- Evaluator -------------------------------------------------------------------

Evaluator::Evaluator(const Objective& objective, TrialLedger& ledger)
    : objective_(objective), ledger_(ledger) {
  if (!(objective.fingerprints() == ledger.fingerprints())) {
    throw EvaluationError("ledger fingerprints do not match the objective");
  }
}

TrialRecord Evaluator::compute(const Configuration& config) const {
  TrialRecord r;
  r.key = canonical_key(config);
  r.config = config;
  r.seed = mix_seed(objective_.base_seed(), r.key);
  const auto start = std::chrono::steady_clock::now();
  FoldOutcome outcome = objective_.run(config, r.seed);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto k = static_cast<std::size_t>(objective_.folds());
  bool valid = !outcome.failed && outcome.losses.size() == k;
  for (double v : outcome.losses) valid = valid && std::isfinite(v) && v >= 0.0;
  if (!valid) {
    r.failed = true;
    r.error = outcome.failed ? outcome.error : "objective returned invalid fold losses";
    r.fold_losses.assign(k, objective_.failure_penalty());
  } else {
    r.fold_losses = std::move(outcome.losses);
  }
  double sum = 0.0;
  for (double v : r.fold_losses) sum += v;
  r.mean_loss = sum / static_cast<double>(k);
  return r;
}

TrialRecord Evaluator::evaluate(const Configuration& config) {
  const auto key = canonical_key(config);
  if (auto cached = ledger_.find(key)) return *cached;
  if (shared_) {
    if (auto cached = shared_->find(key)) {
      ledger_.insert(*cached);
      return *ledger_.find(key);
    }
  }
  auto record = compute(config);
  ++computations_;
  if (shared_) shared_->insert(record);
  ledger_.insert(record);
  return *ledger_.find(key);
}

std::vector<TrialRecord> Evaluator::evaluate_many(
    const std::vector<Configuration>& configs, int jobs) {
  std::vector<std::size_t> misses;
  std::set<std::string> queued;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto key = canonical_key(configs[i]);
    if (ledger_.contains(key) || !queued.insert(key).second) continue;
    if (shared_) {
      if (auto cached = shared_->find(key)) {
        ledger_.insert(*cached);
        continue;
      }
    }
    misses.push_back(i);
  }
  std::vector<std::optional<TrialRecord>> computed(misses.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t m = next++;
      if (m >= misses.size()) return;
      try {
        computed[m] = compute(configs[misses[m]]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = misses.size();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(misses.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  for (auto& record : computed) {
    ++computations_;
    if (shared_) shared_->insert(*record);
    ledger_.insert(std::move(*record));
  }
  std::vector<TrialRecord> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(*ledger_.find(canonical_key(c)));
  return out;
}

}  // namespace pipegrader
