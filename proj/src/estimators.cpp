#include "cfade/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "cfade/error.hpp"
#include "cfade/rng.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

EffectEstimate average_effect(std::span<const MuPair> mus) {
  if (mus.empty()) throw ValidationError("average over an empty set of admissions");
  double s0 = 0.0, s1 = 0.0;
  for (const auto& m : mus) {
    s0 += m.mu0;
    s1 += m.mu1;
  }
  const auto n = static_cast<double>(mus.size());
  return {s0 / n, s1 / n};
}

SupportInterval common_support(std::span<const double> scores, std::span<const int> treatment) {
  if (scores.size() != treatment.size())
    throw ValidationError("common support: scores and treatment differ in length");
  double min_t = INFINITY, max_t = -INFINITY, min_c = INFINITY, max_c = -INFINITY;
  std::size_t n_t = 0, n_c = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (treatment[i] == 1) {
      min_t = std::min(min_t, scores[i]);
      max_t = std::max(max_t, scores[i]);
      ++n_t;
    } else {
      min_c = std::min(min_c, scores[i]);
      max_c = std::max(max_c, scores[i]);
      ++n_c;
    }
  }
  if (n_t == 0) throw ValidationError("common support: treated arm is empty");
  if (n_c == 0) throw ValidationError("common support: control arm is empty");
  SupportInterval s;
  s.lower = std::max(min_t, min_c);
  s.upper = std::min(max_t, max_c);
  if (s.lower > s.upper) throw EstimationError("no common support");
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!s.contains(scores[i])) s.excluded.push_back(i);
  return s;
}

double pc_low(const MuPair& mu) {
  if (mu.mu1 == 0.0) throw EstimationError("undefined: zero treated risk");
  const double err = 1.0 - mu.mu0 / mu.mu1;
  return err > 0.0 ? err : 0.0;
}

std::vector<int> treatment_vector(const Cohort& cohort) {
  std::vector<int> t;
  t.reserve(cohort.size());
  for (const auto& a : cohort.admissions) t.push_back(a.treatment);
  return t;
}

std::vector<int> outcome_vector(const Cohort& cohort) {
  std::vector<int> y;
  y.reserve(cohort.size());
  for (const auto& a : cohort.admissions) {
    if (!a.outcome) throw ValidationError("admission " + a.admission_id + " has no outcome");
    y.push_back(*a.outcome);
  }
  return y;
}

Cohort with_outcomes(const Cohort& cohort) {
  Cohort out{cohort.schema, {}};
  for (const auto& a : cohort.admissions)
    if (a.outcome) out.admissions.push_back(a);
  return out;
}

namespace {

LearnerSpec seeded(LearnerSpec spec, std::uint64_t seed, std::uint64_t stream) {
  spec.seed = derive_seed(seed, stream);
  return spec;
}

FittedLearner fit_arm(const Cohort& analysis, const std::vector<std::string>& features, int arm,
                      const LearnerSpec& spec) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < analysis.size(); ++i)
    if (analysis.admissions[i].treatment == arm) rows.push_back(i);
  const Cohort sub = analysis.subset(rows);
  const auto y = outcome_vector(sub);
  const bool has0 = std::find(y.begin(), y.end(), 0) != y.end();
  const bool has1 = std::find(y.begin(), y.end(), 1) != y.end();
  if (!has0 || !has1)
    throw EstimationError(std::string(arm == 1 ? "vancomycin" : "alternative") +
                          " arm has a single outcome class after trimming");
  return fit_learner(feature_matrix(sub, features), y, spec);
}

}  // namespace

TLearnerModel fit_tlearner(const Cohort& input, const LearnerSpec& learner,
                           const LearnerSpec& propensity, std::uint64_t seed) {
  learner.validate();
  propensity.validate();
  const Cohort cohort = with_outcomes(input);
  if (cohort.empty()) throw EstimationError("no admissions with an observed outcome");

  TLearnerModel model;
  model.imputation = fit_imputation(cohort);
  const Cohort imputed = apply_imputation(model.imputation, cohort);

  const auto all_features = covariate_names(imputed.schema);
  const auto x_all = feature_matrix(imputed, all_features);
  const auto treatment = treatment_vector(imputed);
  {
    const bool has0 = std::find(treatment.begin(), treatment.end(), 0) != treatment.end();
    const bool has1 = std::find(treatment.begin(), treatment.end(), 1) != treatment.end();
    if (!has0 || !has1) throw EstimationError("both treatment arms must be present to fit a T-learner");
  }
  model.propensity = fit_propensity(x_all, treatment, seeded(propensity, seed, 0));
  const auto scores = predict_proba(model.propensity, x_all);
  model.support = common_support(scores, treatment);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (model.support.contains(scores[i])) keep.push_back(i);
  const Cohort analysis = imputed.subset(keep);
  model.n_train_in_support = analysis.size();

  model.selection = select_variables(analysis);
  model.model0 = fit_arm(analysis, model.selection.retained, 0, seeded(learner, seed, 1));
  model.model1 = fit_arm(analysis, model.selection.retained, 1, seeded(learner, seed, 2));
  return model;
}

std::vector<double> predict_propensity(const TLearnerModel& model, const Cohort& cohort) {
  const Cohort imputed = apply_imputation(model.imputation, cohort);
  return predict_proba(model.propensity, feature_matrix(imputed, model.propensity.feature_names()));
}

std::vector<MuPrediction> predict_mu(const TLearnerModel& model, const Cohort& cohort) {
  const Cohort imputed = apply_imputation(model.imputation, cohort);
  const auto scores =
      predict_proba(model.propensity, feature_matrix(imputed, model.propensity.feature_names()));
  const auto x = feature_matrix(imputed, model.selection.retained);
  const auto mu0 = predict_proba(model.model0, x);
  const auto mu1 = predict_proba(model.model1, x);
  std::vector<MuPrediction> out(cohort.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mu = {mu0[i], mu1[i]};
    out[i].propensity = scores[i];
    out[i].in_support = model.support.contains(scores[i]);
  }
  return out;
}

namespace {

std::vector<CaseEstimate> score_cases(const Cohort& cohort, std::span<const MuPair> mu,
                                      const std::vector<bool>& in_support) {
  std::vector<CaseEstimate> cases;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& a = cohort.admissions[i];
    if (a.treatment != 1 || a.outcome != 1) continue;
    CaseEstimate c;
    c.admission_id = a.admission_id;
    c.mu = mu[i];
    c.in_support = in_support.empty() || in_support[i];
    const auto effect = EffectEstimate::from_mu(mu[i]);
    c.err = effect.err();
    if (c.in_support) c.pc_low = effect.pc_low();
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

std::vector<CaseEstimate> pc_low_cases(const TLearnerModel& model, const Cohort& cohort) {
  const auto pred = predict_mu(model, cohort);
  std::vector<MuPair> mu;
  std::vector<bool> support;
  for (const auto& p : pred) {
    mu.push_back(p.mu);
    support.push_back(p.in_support);
  }
  return score_cases(cohort, mu, support);
}

std::vector<CaseEstimate> pc_low_cases(const Cohort& cohort, std::span<const MuPair> mu) {
  if (mu.size() != cohort.size()) throw ValidationError("pc_low_cases: mu and cohort differ in length");
  return score_cases(cohort, mu, {});
}

EffectEstimate att_tlearner(const Cohort& cohort, std::span<const MuPair> mu,
                            const std::vector<bool>& include) {
  if (mu.size() != cohort.size()) throw ValidationError("att_tlearner: mu and cohort differ in length");
  std::vector<MuPair> treated;
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (cohort.admissions[i].treatment == 1 && (include.empty() || include[i]))
      treated.push_back(mu[i]);
  if (treated.empty()) throw EstimationError("no treated admissions inside the support interval");
  return average_effect(treated);
}

EffectEstimate att_tlearner(const TLearnerModel& model, const Cohort& cohort) {
  const auto pred = predict_mu(model, cohort);
  std::vector<MuPair> mu;
  std::vector<bool> include;
  for (const auto& p : pred) {
    mu.push_back(p.mu);
    include.push_back(p.in_support);
  }
  return att_tlearner(cohort, mu, include);
}

EffectEstimate att_iptw(std::span<const double> scores, std::span<const int> treatment,
                        std::span<const int> outcome) {
  if (scores.size() != treatment.size() || scores.size() != outcome.size())
    throw ValidationError("att_iptw: input lengths differ");
  double treated_sum = 0.0, n_treated = 0.0, control_num = 0.0, control_den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (treatment[i] == 1) {
      treated_sum += outcome[i];
      n_treated += 1.0;
      continue;
    }
    const double e = scores[i];
    if (!(e >= 0.0 && e < 1.0))
      throw ValidationError("att_iptw: control propensity " + text::format_double(e) +
                            " gives an infinite weight; trim to common support first");
    const double w = e / (1.0 - e);
    control_num += w * outcome[i];
    control_den += w;
  }
  if (n_treated == 0.0) throw ValidationError("att_iptw: treated arm is empty");
  if (scores.size() == static_cast<std::size_t>(n_treated))
    throw ValidationError("att_iptw: control arm is empty");
  if (control_den == 0.0) throw EstimationError("att_iptw: all control weights are zero");
  return {control_num / control_den, treated_sum / n_treated};
}

EffectEstimate att_unadjusted(std::span<const int> treatment, std::span<const int> outcome) {
  if (treatment.size() != outcome.size()) throw ValidationError("att_unadjusted: input lengths differ");
  double s[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < treatment.size(); ++i) {
    s[treatment[i]] += outcome[i];
    n[treatment[i]] += 1.0;
  }
  if (n[0] == 0.0 || n[1] == 0.0) throw ValidationError("att_unadjusted: an arm is empty");
  return {s[0] / n[0], s[1] / n[1]};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using text::format_double;

std::string next_token(std::istream& in, std::string_view what) {
  std::string tok;
  if (!(in >> tok)) throw ValidationError("t-learner file: truncated at " + std::string(what));
  return tok;
}

void expect(std::istream& in, std::string_view token) {
  const auto tok = next_token(in, token);
  if (tok != token)
    throw ValidationError("t-learner file: expected '" + std::string(token) + "', got '" + tok + "'");
}

double next_double(std::istream& in, std::string_view what) {
  const auto tok = next_token(in, what);
  const auto v = text::parse_double(tok);
  if (!v) throw ValidationError("t-learner file: bad number for " + std::string(what));
  return *v;
}

std::size_t next_count(std::istream& in, std::string_view what) {
  const auto tok = next_token(in, what);
  try {
    return static_cast<std::size_t>(std::stoull(tok));
  } catch (const std::exception&) {
    throw ValidationError("t-learner file: bad count for " + std::string(what));
  }
}

}  // namespace

void TLearnerModel::serialize(std::ostream& out) const {
  out << kTLearnerMagic << '\n';
  out << "imputation " << imputation.names.size() << '\n';
  for (std::size_t j = 0; j < imputation.names.size(); ++j)
    out << imputation.names[j] << ' ' << format_double(imputation.fill[j]) << '\n';
  out << "support " << format_double(support.lower) << ' ' << format_double(support.upper) << ' '
      << n_train_in_support << '\n';
  out << "removed_by_prevalence " << selection.removed_by_prevalence.size() << '\n';
  for (const auto& n : selection.removed_by_prevalence) out << n << '\n';
  out << "removed_by_pvalue " << selection.removed_by_pvalue.size() << '\n';
  for (const auto& [n, p] : selection.removed_by_pvalue) out << n << ' ' << format_double(p) << '\n';
  out << "retained " << selection.retained.size() << '\n';
  for (const auto& n : selection.retained) out << n << '\n';
  out << "propensity\n";
  propensity.serialize(out);
  out << "model0\n";
  model0.serialize(out);
  out << "model1\n";
  model1.serialize(out);
  out << "end\n";
}

TLearnerModel TLearnerModel::deserialize(std::istream& in) {
  std::string magic;
  if (!(in >> magic) || magic != kTLearnerMagic)
    throw ValidationError("t-learner file: missing '" + std::string(kTLearnerMagic) + "' header");
  TLearnerModel m;
  expect(in, "imputation");
  const auto n_imp = next_count(in, "imputation count");
  for (std::size_t j = 0; j < n_imp; ++j) {
    m.imputation.names.push_back(next_token(in, "imputation name"));
    m.imputation.fill.push_back(next_double(in, "imputation value"));
  }
  expect(in, "support");
  m.support.lower = next_double(in, "support lower");
  m.support.upper = next_double(in, "support upper");
  m.n_train_in_support = next_count(in, "support count");
  expect(in, "removed_by_prevalence");
  for (std::size_t k = next_count(in, "prevalence count"); k > 0; --k)
    m.selection.removed_by_prevalence.push_back(next_token(in, "name"));
  expect(in, "removed_by_pvalue");
  for (std::size_t k = next_count(in, "p-value count"); k > 0; --k) {
    auto name = next_token(in, "name");
    m.selection.removed_by_pvalue.emplace_back(std::move(name), next_double(in, "p-value"));
  }
  expect(in, "retained");
  for (std::size_t k = next_count(in, "retained count"); k > 0; --k)
    m.selection.retained.push_back(next_token(in, "name"));
  expect(in, "propensity");
  m.propensity = FittedLearner::deserialize(in);
  expect(in, "model0");
  m.model0 = FittedLearner::deserialize(in);
  expect(in, "model1");
  m.model1 = FittedLearner::deserialize(in);
  expect(in, "end");
  return m;
}

}  // namespace cfade
