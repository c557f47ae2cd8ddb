#include "cfade/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cfade/error.hpp"
#include "cfade/estimators.hpp"
#include "cfade/resampling.hpp"
#include "cfade/rng.hpp"
#include "cfade/text_io.hpp"
#include "json.hpp"

namespace cfade {

namespace fs = std::filesystem;
using nlohmann::json;
using text::format_double;

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end())
      throw ValidationError("unknown config key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

LearnerSpec parse_learner(const json& j, const std::string& where, const LearnerSpec& base = {}) {
  reject_unknown_keys(j,
                      {"name", "kind", "max_iterations", "tolerance", "ridge", "n_trees", "mtry",
                       "min_leaf", "max_depth", "recalibrate", "seed"},
                      where);
  LearnerSpec spec = base;
  if (j.contains("kind")) spec.kind = parse_learner_kind(j.at("kind").get<std::string>());
  read_opt(j, "max_iterations", spec.logistic.max_iterations);
  read_opt(j, "tolerance", spec.logistic.tolerance);
  read_opt(j, "ridge", spec.logistic.ridge);
  read_opt(j, "n_trees", spec.forest.n_trees);
  read_opt(j, "mtry", spec.forest.mtry);
  read_opt(j, "min_leaf", spec.forest.min_leaf);
  read_opt(j, "max_depth", spec.forest.max_depth);
  read_opt(j, "recalibrate", spec.recalibrate);
  read_opt(j, "seed", spec.seed);
  spec.validate();
  return spec;
}

DgpConfig parse_dgp(const json& j) {
  reject_unknown_keys(j,
                      {"n_admissions", "n_clusters", "n_continuous", "n_binary_confounders",
                       "n_nephrotoxins", "propensity_coefficients", "baseline_coefficients",
                       "effect_coefficients", "coupling", "missingness_rate",
                       "binary_prevalences", "cluster_intercept_sd", "seed"},
                      "synth");
  const auto n = j.value("n_admissions", std::size_t{1000});
  DgpConfig c = default_dgp_config(n, 0);
  const bool custom_layout = j.contains("n_continuous") || j.contains("n_binary_confounders") ||
                             j.contains("n_nephrotoxins");
  read_opt(j, "n_clusters", c.n_clusters);
  read_opt(j, "n_continuous", c.n_continuous);
  read_opt(j, "n_binary_confounders", c.n_binary_confounders);
  read_opt(j, "n_nephrotoxins", c.n_nephrotoxins);
  if (custom_layout) {
    // Default coefficients only fit the default layout.
    const std::vector<double> zeros(c.n_features() + 1, 0.0);
    c.propensity_coefficients = c.baseline_coefficients = c.effect_coefficients = zeros;
  }
  read_opt(j, "propensity_coefficients", c.propensity_coefficients);
  read_opt(j, "baseline_coefficients", c.baseline_coefficients);
  read_opt(j, "effect_coefficients", c.effect_coefficients);
  if (j.contains("coupling")) c.coupling = parse_coupling(j.at("coupling").get<std::string>());
  read_opt(j, "missingness_rate", c.missingness_rate);
  read_opt(j, "binary_prevalences", c.binary_prevalences);
  read_opt(j, "cluster_intercept_sd", c.cluster_intercept_sd);
  read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void RunConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train_fraction must lie in (0, 1)");
  if (replications < 1) throw ValidationError("replications must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("bootstrap level must lie in (0, 1)");
  if (learners.empty()) throw ValidationError("at least one learner is required");
  std::set<std::string> names;
  for (const auto& l : learners) {
    if (l.name.empty() || l.name.find_first_of(" ,/\\#") != std::string::npos)
      throw ValidationError("invalid learner name '" + l.name + "'");
    if (!names.insert(l.name).second) throw ValidationError("duplicate learner name '" + l.name + "'");
    l.spec.validate();
  }
  if (propensity) propensity->validate();
  if (!synth && (input.cohort.empty() || input.schema.empty()))
    throw ValidationError("config needs either a 'synth' section or input.cohort and input.schema");
  if (synth) synth->validate();
}

RunConfig RunConfig::from_json_text(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown_keys(j,
                        {"seed", "output_dir", "input", "synth", "learners", "propensity",
                         "bootstrap", "split", "unadjusted_pre_trim"},
                        "config");
    read_opt(j, "seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("input")) {
      const auto& in = j.at("input");
      reject_unknown_keys(in, {"cohort", "schema", "assessments"}, "input");
      if (in.contains("cohort")) c.input.cohort = resolve(base_dir, in.at("cohort").get<std::string>());
      if (in.contains("schema")) c.input.schema = resolve(base_dir, in.at("schema").get<std::string>());
      if (in.contains("assessments"))
        c.input.assessments = resolve(base_dir, in.at("assessments").get<std::string>());
    }
    if (j.contains("synth")) c.synth = parse_dgp(j.at("synth"));
    if (j.contains("learners")) {
      if (!j.at("learners").is_array()) throw ValidationError("'learners' must be an array");
      for (const auto& l : j.at("learners")) {
        NamedLearner nl;
        nl.spec = parse_learner(l, "learner");
        nl.name = l.value("name", std::string(to_string(nl.spec.kind)));
        c.learners.push_back(std::move(nl));
      }
    } else {
      c.learners = {{"logistic", LearnerSpec{}}};
    }
    if (j.contains("propensity")) c.propensity = parse_learner(j.at("propensity"), "propensity");
    if (j.contains("bootstrap")) {
      const auto& b = j.at("bootstrap");
      reject_unknown_keys(b, {"replications", "level"}, "bootstrap");
      read_opt(b, "replications", c.replications);
      read_opt(b, "level", c.level);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown_keys(s, {"train_fraction", "seed"}, "split");
      read_opt(s, "train_fraction", c.train_fraction);
      if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
    }
    read_opt(j, "unadjusted_pre_trim", c.unadjusted_pre_trim);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), path.parent_path());
}

std::uint64_t RunConfig::synth_seed() const {
  return synth && synth->seed != 0 ? synth->seed : derive_seed(seed, 0);
}
std::uint64_t RunConfig::effective_split_seed() const {
  return split_seed ? *split_seed : derive_seed(seed, 1);
}
std::uint64_t RunConfig::fit_seed() const { return derive_seed(seed, 2); }
std::uint64_t RunConfig::bootstrap_seed() const { return derive_seed(seed, 3); }

fs::path RunConfig::cohort_path() const {
  return input.cohort.empty() ? output_dir / "cohort.csv" : input.cohort;
}
fs::path RunConfig::schema_path() const {
  return input.schema.empty() ? output_dir / "schema.csv" : input.schema;
}
fs::path RunConfig::assessments_path() const {
  return input.assessments.empty() ? output_dir / "assessments.csv" : input.assessments;
}

LearnerSpec propensity_spec_for(const RunConfig& config, const LearnerSpec& learner) {
  return config.propensity ? *config.propensity : learner;
}

ExpertCategory synthetic_category(double pc) {
  if (pc < 0.375) return ExpertCategory::kUnlikely;
  if (pc < 0.625) return ExpertCategory::kPossible;
  if (pc < 0.825) return ExpertCategory::kProbable;
  return ExpertCategory::kNearlyCertain;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

const fs::path kTrainFile = "split/train.csv";
const fs::path kTestFile = "split/test.csv";

fs::path model_file(const NamedLearner& l) { return fs::path("models") / (l.name + ".tlearner"); }

void emit(const RunConfig& config, StageResult& result, const fs::path& rel, const std::string& content) {
  text::write_file(config.output_dir / rel, content);
  result.files.push_back(rel);
}

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

Cohort load_split(const RunConfig& config, const fs::path& rel) {
  return read_cohort(config.output_dir / rel, read_schema(config.schema_path()));
}

TLearnerModel load_model(const RunConfig& config, const NamedLearner& l) {
  const auto path = config.output_dir / model_file(l);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing model file " + path.string() + " (run 'fit' first)");
  return TLearnerModel::deserialize(in);
}

std::vector<TLearnerModel> fit_all(const RunConfig& config, const Cohort& train) {
  std::vector<TLearnerModel> models;
  for (std::size_t k = 0; k < config.learners.size(); ++k) {
    const auto& l = config.learners[k];
    models.push_back(fit_tlearner(train, l.spec, propensity_spec_for(config, l.spec),
                                  derive_seed(config.fit_seed(), k)));
  }
  return models;
}

struct AttRow {
  std::string method;
  EffectEstimate effect;
};

std::vector<AttRow> att_grid(const RunConfig& config, const std::vector<TLearnerModel>& models,
                             const Cohort& train_input) {
  const Cohort train = with_outcomes(train_input);
  const auto treatment = treatment_vector(train);
  const auto outcome = outcome_vector(train);

  std::vector<std::vector<MuPrediction>> preds;
  std::vector<bool> in_all(train.size(), true);
  for (const auto& m : models) {
    preds.push_back(predict_mu(m, train));
    for (std::size_t i = 0; i < train.size(); ++i) in_all[i] = in_all[i] && preds.back()[i].in_support;
  }

  std::vector<AttRow> rows;
  {
    std::vector<int> t, y;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!config.unadjusted_pre_trim && !in_all[i]) continue;
      t.push_back(treatment[i]);
      y.push_back(outcome[i]);
    }
    rows.push_back({"unadjusted", att_unadjusted(t, y)});
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::vector<MuPair> mu;
    std::vector<bool> include;
    for (const auto& p : preds[k]) {
      mu.push_back(p.mu);
      include.push_back(p.in_support);
    }
    rows.push_back({"tlearner_" + config.learners[k].name, att_tlearner(train, mu, include)});
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::vector<double> s;
    std::vector<int> t, y;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!preds[k][i].in_support) continue;
      s.push_back(preds[k][i].propensity);
      t.push_back(treatment[i]);
      y.push_back(outcome[i]);
    }
    rows.push_back({"iptw_" + config.learners[k].name, att_iptw(s, t, y)});
  }
  return rows;
}

std::string format_estimates(const Cohort& cohort, const std::vector<MuPrediction>& pred) {
  std::string out = "admission_id,mu0,mu1,err,pc_low,in_support\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto e = EffectEstimate::from_mu(pred[i].mu);
    out += cohort.admissions[i].admission_id + ',' + format_double(pred[i].mu.mu0) + ',' +
           format_double(pred[i].mu.mu1) + ',' + opt_str(e.err()) + ',' + opt_str(e.pc_low()) + ',' +
           (pred[i].in_support ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<ExpertAssessment> load_assessments(const RunConfig& config) {
  return read_assessments(config.assessments_path());
}

// Case-level PC_low of every learner on `test`, keyed by admission id.
struct TestCases {
  std::vector<std::vector<CaseEstimate>> per_learner;
};

TestCases score_test(const std::vector<TLearnerModel>& models, const Cohort& test) {
  TestCases tc;
  for (const auto& m : models) tc.per_learner.push_back(pc_low_cases(m, test));
  return tc;
}

// PC_low vectors over cases scored by both learners a and b.
std::optional<double> case_correlation(const TestCases& tc, std::size_t a, std::size_t b) {
  std::unordered_map<std::string, double> lookup;
  for (const auto& c : tc.per_learner[b])
    if (c.pc_low) lookup.emplace(c.admission_id, *c.pc_low);
  std::vector<double> x, y;
  for (const auto& c : tc.per_learner[a]) {
    if (!c.pc_low) continue;
    auto it = lookup.find(c.admission_id);
    if (it == lookup.end()) continue;
    x.push_back(*c.pc_low);
    y.push_back(it->second);
  }
  if (x.size() < 2) return std::nullopt;
  return pearson(x, y);
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageResult cmd_synth(const RunConfig& config) {
  if (!config.synth) throw ValidationError("'synth' requires a synth section in the config");
  DgpConfig dgp = *config.synth;
  dgp.seed = config.synth_seed();
  const auto synthetic = generate_cohort(dgp);
  const Cohort cohort = synthetic.cohort();

  std::vector<ExpertAssessment> labels;
  for (const auto& s : synthetic.admissions)
    if (s.admission.treatment == 1 && s.admission.outcome == 1)
      labels.push_back({s.admission.admission_id, synthetic_category(true_pc(s))});

  StageResult r;
  emit(config, r, "schema.csv", format_schema(cohort.schema));
  emit(config, r, "cohort.csv", format_cohort(cohort));
  emit(config, r, "oracle.csv", format_oracle(synthetic.admissions));
  emit(config, r, "assessments.csv", format_assessments(labels));
  return r;
}

StageResult cmd_split(const RunConfig& config) {
  const Cohort cohort = read_cohort(config.cohort_path(), config.schema_path());
  if (cohort.size() < 2) throw ValidationError("need at least two admissions to split");
  std::vector<std::size_t> order(cohort.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.effective_split_seed());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(cohort.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, cohort.size() - 1);
  std::vector<char> is_train(cohort.size(), 0);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = 1;

  std::vector<std::size_t> train_rows, test_rows;
  std::string manifest = "admission_id,set\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    (is_train[i] ? train_rows : test_rows).push_back(i);
    manifest += cohort.admissions[i].admission_id + (is_train[i] ? ",train\n" : ",test\n");
  }
  StageResult r;
  emit(config, r, kTrainFile, format_cohort(cohort.subset(train_rows)));
  emit(config, r, kTestFile, format_cohort(cohort.subset(test_rows)));
  emit(config, r, "split/split_manifest.csv", manifest);
  return r;
}

StageResult cmd_fit(const RunConfig& config) {
  const Cohort train = load_split(config, kTrainFile);
  const auto models = fit_all(config, train);
  StageResult r;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& l = config.learners[k];
    std::ostringstream out;
    models[k].serialize(out);
    emit(config, r, model_file(l), out.str());
    std::string report = models[k].selection.to_text();
    report += "# support " + format_double(models[k].support.lower) + ' ' +
              format_double(models[k].support.upper) + " (" + std::to_string(models[k].n_train_in_support) +
              " training admissions inside)\n";
    emit(config, r, fs::path("models") / (l.name + ".selection.txt"), report);
  }
  return r;
}

StageResult cmd_estimate(const RunConfig& config) {
  const Cohort train = load_split(config, kTrainFile);
  const Cohort test = load_split(config, kTestFile);
  std::vector<TLearnerModel> models;
  for (const auto& l : config.learners) models.push_back(load_model(config, l));

  StageResult r;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& name = config.learners[k].name;
    emit(config, r, fs::path("estimates") / (name + "_train.csv"), format_estimates(train, predict_mu(models[k], train)));
    emit(config, r, fs::path("estimates") / (name + "_test.csv"), format_estimates(test, predict_mu(models[k], test)));
  }
  std::string att = "method,risk0,risk1,ard,rr\n";
  for (const auto& row : att_grid(config, models, train))
    att += row.method + ',' + format_double(row.effect.risk0) + ',' + format_double(row.effect.risk1) + ',' +
           format_double(row.effect.ard()) + ',' + opt_str(row.effect.rr()) + '\n';
  emit(config, r, "estimates/att.csv", att);
  return r;
}

StageResult cmd_bootstrap(const RunConfig& config) {
  const Cohort train = load_split(config, kTrainFile);
  const Cohort test = load_split(config, kTestFile);
  const auto assessments = load_assessments(config);
  std::unordered_map<std::string, ExpertCategory> assessed;
  for (const auto& a : assessments) assessed.emplace(a.admission_id, a.category);
  std::unordered_set<std::string> test_ids;
  for (const auto& a : test.admissions) test_ids.insert(a.admission_id);

  Cohort combined = train;
  combined.admissions.insert(combined.admissions.end(), test.admissions.begin(), test.admissions.end());
  combined.validate();

  const std::size_t n_learners = config.learners.size();
  std::vector<std::string> att_methods{"unadjusted"};
  for (const auto& l : config.learners) att_methods.push_back("tlearner_" + l.name);
  for (const auto& l : config.learners) att_methods.push_back("iptw_" + l.name);
  const char* att_fields[] = {"risk0", "risk1", "ard", "rr"};
  const char* agreement_fields[] = {"mse", "auc", "ppv"};

  std::vector<std::string> output_names;
  for (const auto& m : att_methods)
    for (const char* f : att_fields) output_names.push_back("att:" + m + ":" + f);
  for (const auto& l : config.learners)
    for (const char* f : agreement_fields) output_names.push_back("agreement:" + l.name + ":" + f);
  for (const auto& l : config.learners) {
    output_names.push_back("factual:" + l.name + ":vancomycin");
    output_names.push_back("factual:" + l.name + ":alternative");
  }
  for (std::size_t a = 0; a < n_learners; ++a)
    for (std::size_t b = a + 1; b < n_learners; ++b)
      output_names.push_back("correlation:" + config.learners[a].name + ":" + config.learners[b].name);

  const double nan = std::nan("");
  auto or_nan = [&](const std::optional<double>& v) { return v ? *v : nan; };

  const VectorEstimator estimator = [&](const Cohort& sample) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < sample.size(); ++i)
      (test_ids.contains(source_admission_id(sample.admissions[i].admission_id)) ? test_rows : train_rows)
          .push_back(i);
    const Cohort s_train = sample.subset(train_rows);
    const Cohort s_test = sample.subset(test_rows);
    const auto models = fit_all(config, s_train);

    std::vector<double> out;
    for (const auto& row : att_grid(config, models, s_train)) {
      out.push_back(row.effect.risk0);
      out.push_back(row.effect.risk1);
      out.push_back(row.effect.ard());
      out.push_back(or_nan(row.effect.rr()));
    }
    const auto tc = score_test(models, s_test);
    for (std::size_t k = 0; k < n_learners; ++k) {
      std::vector<ExpertAssessment> labels;
      for (const auto& c : tc.per_learner[k]) {
        auto it = assessed.find(source_admission_id(c.admission_id));
        if (it == assessed.end()) throw ValidationError("no assessment for case " + c.admission_id);
        labels.push_back({c.admission_id, it->second});
      }
      try {
        const auto rep = evaluate_counterfactual(tc.per_learner[k], labels);
        out.push_back(rep.mse);
        out.push_back(or_nan(rep.auc));
        out.push_back(or_nan(rep.ppv));
      } catch (const EstimationError&) {
        out.insert(out.end(), {nan, nan, nan});
      }
    }
    for (const auto& m : models) {
      const auto f = evaluate_factual(m, s_test);
      out.push_back(or_nan(f.treated));
      out.push_back(or_nan(f.control));
    }
    for (std::size_t a = 0; a < n_learners; ++a)
      for (std::size_t b = a + 1; b < n_learners; ++b) out.push_back(or_nan(case_correlation(tc, a, b)));
    return out;
  };

  BootstrapOptions options;
  options.replications = config.replications;
  options.level = config.level;
  options.seed = config.bootstrap_seed();
  const auto results = cluster_bootstrap(combined, estimator, options);

  auto cell = [&](const BootstrapResult& b) {
    return format_double(b.point_estimate) + ',' + format_double(b.ci_lower) + ',' + format_double(b.ci_upper);
  };
  StageResult r;
  std::size_t idx = 0;
  std::string att = "method";
  for (const char* f : att_fields) att += std::string(",") + f + "," + f + "_lower," + f + "_upper";
  att += ",n_failed\n";
  for (const auto& m : att_methods) {
    att += m;
    std::size_t failed = 0;
    for (std::size_t f = 0; f < 4; ++f, ++idx) {
      att += ',' + cell(results[idx]);
      failed = std::max(failed, results[idx].n_failed);
    }
    att += ',' + std::to_string(failed) + '\n';
  }
  emit(config, r, "bootstrap/att.csv", att);

  std::string agreement = "learner,metric,estimate,lower,upper,n_failed\n";
  for (const auto& l : config.learners)
    for (const char* f : agreement_fields) {
      agreement += l.name + ',' + f + ',' + cell(results[idx]) + ',' + std::to_string(results[idx].n_failed) + '\n';
      ++idx;
    }
  emit(config, r, "bootstrap/agreement.csv", agreement);

  std::string factual = "model,auc,lower,upper,n_failed\n";
  for (const auto& l : config.learners)
    for (const char* arm : {"vancomycin", "alternative"}) {
      factual += std::string(arm) + " - " + l.name + ',' + cell(results[idx]) + ',' +
                 std::to_string(results[idx].n_failed) + '\n';
      ++idx;
    }
  emit(config, r, "bootstrap/factual_auc.csv", factual);

  std::string corr = "learner_a,learner_b,pearson,lower,upper,n_failed\n";
  for (std::size_t a = 0; a < n_learners; ++a)
    for (std::size_t b = a + 1; b < n_learners; ++b) {
      corr += config.learners[a].name + ',' + config.learners[b].name + ',' + cell(results[idx]) + ',' +
              std::to_string(results[idx].n_failed) + '\n';
      ++idx;
    }
  emit(config, r, "bootstrap/correlation.csv", corr);

  // Wide replicate dump: one row per replication, NA where an output failed.
  std::string reps = "replication";
  for (const auto& n : output_names) reps += ',' + n;
  reps += '\n';
  std::vector<std::map<std::size_t, double>> by_rep(results.size());
  for (std::size_t j = 0; j < results.size(); ++j)
    for (std::size_t k = 0; k < results[j].replicates.size(); ++k)
      by_rep[j][results[j].replicate_index[k]] = results[j].replicates[k];
  for (std::size_t rep = 0; rep < config.replications; ++rep) {
    reps += std::to_string(rep);
    for (std::size_t j = 0; j < results.size(); ++j) {
      auto it = by_rep[j].find(rep);
      reps += ',' + (it == by_rep[j].end() ? std::string("NA") : format_double(it->second));
    }
    reps += '\n';
  }
  emit(config, r, "bootstrap/replicates.csv", reps);
  return r;
}

StageResult cmd_evaluate(const RunConfig& config) {
  const Cohort train = load_split(config, kTrainFile);
  const Cohort test = load_split(config, kTestFile);
  const auto assessments = load_assessments(config);
  std::vector<TLearnerModel> models;
  for (const auto& l : config.learners) models.push_back(load_model(config, l));
  const std::size_t n = models.size();
  StageResult r;

  std::string factual = "model,auc\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto f = evaluate_factual(models[k], test);
    factual += "vancomycin - " + config.learners[k].name + ',' + opt_str(f.treated) + '\n';
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto f = evaluate_factual(models[k], test);
    factual += "alternative - " + config.learners[k].name + ',' + opt_str(f.control) + '\n';
  }
  emit(config, r, "evaluation/factual_auc.csv", factual);

  const auto tc = score_test(models, test);
  std::string agreement = "learner,n_cases,mse,auc,ppv\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto& name = config.learners[k].name;
    std::string cases = "admission_id,pc_low,mapped_probability,dichotomized\n";
    try {
      const auto rep = evaluate_counterfactual(tc.per_learner[k], assessments);
      agreement += name + ',' + std::to_string(rep.n_cases) + ',' + format_double(rep.mse) + ',' +
                   opt_str(rep.auc) + ',' + opt_str(rep.ppv) + '\n';
      for (const auto& c : rep.cases)
        cases += c.admission_id + ',' + format_double(c.pc_low) + ',' + format_double(c.mapped_probability) +
                 ',' + std::to_string(c.dichotomized) + '\n';
    } catch (const EstimationError&) {
      agreement += name + ",0,NA,NA,NA\n";
    }
    emit(config, r, fs::path("evaluation") / ("agreement_cases_" + name + ".csv"), cases);
  }
  emit(config, r, "evaluation/agreement.csv", agreement);

  std::string corr = "learner";
  for (const auto& l : config.learners) corr += ',' + l.name;
  corr += '\n';
  for (std::size_t a = 0; a < n; ++a) {
    corr += config.learners[a].name;
    for (std::size_t b = 0; b < n; ++b) {
      if (b > a) corr += ',';
      else if (b == a) corr += ",1";
      else corr += ',' + opt_str(case_correlation(tc, a, b));
    }
    corr += '\n';
  }
  emit(config, r, "evaluation/correlation.csv", corr);

  const Cohort train_obs = with_outcomes(train);
  const auto treatment = treatment_vector(train_obs);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& name = config.learners[k].name;
    const auto scores = predict_propensity(models[k], train_obs);
    emit(config, r, fs::path("evaluation") / ("propensity_hist_" + name + ".csv"),
         propensity_histogram(scores, treatment).to_csv());

    std::vector<double> pcs;
    for (const auto& c : pc_low_cases(models[k], train_obs))
      if (c.pc_low) pcs.push_back(*c.pc_low);
    const auto counts = histogram_counts(pcs);
    std::string dist = "bin_lower,bin_upper,count\n";
    for (std::size_t b = 0; b < kHistogramBins; ++b)
      dist += text::format_fixed(Histogram::bin_lower(b), 2) + ',' + text::format_fixed(Histogram::bin_lower(b + 1), 2) +
              ',' + std::to_string(counts[b]) + '\n';
    emit(config, r, fs::path("evaluation") / ("pc_low_distribution_" + name + ".csv"), dist);
  }
  return r;
}

StageResult cmd_run(const RunConfig& config) {
  const std::string started = timestamp_utc();
  StageResult all;
  auto append = [&](StageResult s) { all.files.insert(all.files.end(), s.files.begin(), s.files.end()); };
  if (config.synth) append(cmd_synth(config));
  append(cmd_split(config));
  append(cmd_fit(config));
  append(cmd_estimate(config));
  append(cmd_bootstrap(config));
  append(cmd_evaluate(config));

  json manifest;
  manifest["started_at"] = started;
  manifest["finished_at"] = timestamp_utc();
  manifest["seed"] = config.seed;
  manifest["seeds"] = {{"synth", config.synth ? config.synth_seed() : 0},
                       {"split", config.effective_split_seed()},
                       {"fit", config.fit_seed()},
                       {"bootstrap", config.bootstrap_seed()}};
  manifest["replications"] = config.replications;
  manifest["level"] = config.level;
  json learners = json::array();
  for (const auto& l : config.learners) learners.push_back({{"name", l.name}, {"kind", to_string(l.spec.kind)}});
  manifest["learners"] = learners;
  json files = json::array();
  for (const auto& f : all.files) files.push_back(f.generic_string());
  manifest["files"] = files;
  text::write_file(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
  all.files.push_back("manifest.json");
  return all;
}

}  // namespace cfade
