#include "cfade/estimators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cfade/error.hpp"
#include "cfade/synth.hpp"
#include "oracles.hpp"

using namespace cfade;

namespace {

LearnerSpec logistic_spec() { return LearnerSpec{}; }

LearnerSpec small_forest() {
  LearnerSpec s;
  s.kind = LearnerKind::kRandomForest;
  s.forest.n_trees = 30;
  return s;
}

}  // namespace

TEST(Effect, PcLowAndErr) {
  EXPECT_DOUBLE_EQ(pc_low({0.1, 0.4}), 0.75);
  EXPECT_EQ(pc_low({0.4, 0.1}), 0.0);
  EXPECT_EQ(pc_low({0.0, 0.3}), 1.0);
  EXPECT_THROW(pc_low({0.1, 0.0}), EstimationError);
  const EffectEstimate e{0.2, 0.1};
  EXPECT_DOUBLE_EQ(*e.err(), -1.0);
  EXPECT_EQ(*e.pc_low(), 0.0);
  EXPECT_FALSE((EffectEstimate{0.0, 0.1}).rr());
  EXPECT_FALSE((EffectEstimate{0.1, 0.0}).err());
}

TEST(Effect, AverageOverTreated) {
  std::vector<MuPair> mu = {{0.1, 0.2}, {0.3, 0.6}};
  const auto e = average_effect(mu);
  EXPECT_DOUBLE_EQ(e.risk0, 0.2);
  EXPECT_DOUBLE_EQ(e.risk1, 0.4);
  EXPECT_THROW(average_effect(std::span<const MuPair>{}), ValidationError);
}

TEST(Support, MinMaxRule) {
  std::vector<double> s = {0.10, 0.20, 0.90, 0.15, 0.50, 0.95};
  std::vector<int> t = {0, 0, 0, 1, 1, 1};
  const auto sup = common_support(s, t);
  EXPECT_EQ(sup.lower, 0.15);
  EXPECT_EQ(sup.upper, 0.90);
  EXPECT_EQ(sup.excluded, (std::vector<std::size_t>{0, 5}));
  EXPECT_TRUE(sup.contains(0.15));
  EXPECT_TRUE(sup.contains(0.90));
  EXPECT_FALSE(sup.contains(0.95));
}

TEST(Support, Failures) {
  std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
  std::vector<int> t = {0, 0, 1, 1};
  EXPECT_THROW(common_support(s, t), EstimationError);
  std::vector<int> one_arm = {1, 1, 1, 1};
  EXPECT_THROW(common_support(s, one_arm), ValidationError);
}

TEST(Att, IptwMatchesLoopOracle) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<> u;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 5 + gen() % 50;
    std::vector<double> s(n);
    std::vector<int> t(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = 0.01 + 0.98 * u(gen);
      t[i] = i < 2 ? static_cast<int>(i) : (u(gen) < s[i] ? 1 : 0);
      y[i] = u(gen) < 0.3 ? 1 : 0;
    }
    const auto e = att_iptw(s, t, y);
    const auto [r0, r1] = oracle::iptw_risks(s, t, y);
    EXPECT_NEAR(e.risk0, r0, 1e-12);
    EXPECT_NEAR(e.risk1, r1, 1e-12);
  }
}

TEST(Att, IptwRejectsCertainControl) {
  std::vector<double> s = {0.5, 1.0};
  std::vector<int> t = {1, 0}, y = {1, 0};
  EXPECT_THROW(att_iptw(s, t, y), ValidationError);
}

TEST(Att, UnadjustedIsRawIncidence) {
  std::vector<int> t = {1, 1, 1, 1, 0, 0, 0, 0, 0};
  std::vector<int> y = {1, 0, 0, 1, 1, 0, 0, 0, 0};
  const auto e = att_unadjusted(t, y);
  EXPECT_DOUBLE_EQ(e.risk1, 0.5);
  EXPECT_DOUBLE_EQ(e.risk0, 0.2);
}

TEST(Att, TLearnerAveragesTreatedInsideSupport) {
  const auto c = oracle::make_cohort(oracle::continuous_schema(1), {{0}, {0}, {0}, {0}}, {1, 1, 0, 1}, {0, 1, 0, 1});
  std::vector<MuPair> mu = {{0.1, 0.2}, {0.3, 0.4}, {0.9, 0.9}, {0.5, 0.9}};
  const auto all = att_tlearner(c, mu);
  EXPECT_DOUBLE_EQ(all.risk0, 0.3);
  EXPECT_DOUBLE_EQ(all.risk1, 0.5);
  const auto trimmed = att_tlearner(c, mu, {true, false, true, true});
  EXPECT_DOUBLE_EQ(trimmed.risk0, 0.3);
  EXPECT_DOUBLE_EQ(trimmed.risk1, 0.55);
  EXPECT_THROW(att_tlearner(c, mu, {false, false, true, false}), EstimationError);
}

TEST(Cases, OnlyTreatedWithOutcome) {
  const auto c = oracle::make_cohort(oracle::continuous_schema(1), {{0}, {0}, {0}, {0}}, {1, 1, 0, 1}, {0, 1, 1, 1});
  std::vector<MuPair> mu = {{0.1, 0.2}, {0.3, 0.4}, {0.9, 0.9}, {0.5, 0.4}};
  const auto cases = pc_low_cases(c, mu);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[0].admission_id, "a1");
  EXPECT_DOUBLE_EQ(*cases[0].pc_low, 0.25);
  EXPECT_EQ(*cases[1].pc_low, 0.0);
  EXPECT_LT(*cases[1].err, 0.0);
}

TEST(TLearner, ControlModelIgnoresTreatedOutcomes) {
  // All covariates are core confounders so selection cannot depend on the
  // treated outcomes either.
  auto cfg = default_dgp_config(3000, 31);
  const auto synth = generate_cohort(cfg);
  Cohort base = synth.cohort();
  CovariateSchema core;
  {
    std::vector<CovariateSpec> specs = base.schema.covariates();
    for (auto& s : specs) s.group = SelectionGroup::kCoreConfounder;
    core = CovariateSchema(specs);
  }
  base.schema = core;
  Cohort flipped = base;
  for (auto& a : flipped.admissions)
    if (a.treatment == 1) a.outcome = 1 - *a.outcome;
  for (const auto& spec : {logistic_spec(), small_forest()}) {
    const auto m1 = fit_tlearner(base, spec, spec, 5);
    const auto m2 = fit_tlearner(flipped, spec, spec, 5);
    EXPECT_TRUE(m1.model0 == m2.model0);
    EXPECT_FALSE(m1.model1 == m2.model1);
  }
}

TEST(TLearner, LogisticRisksTrackTruth) {
  const auto synth = generate_cohort(default_dgp_config(20000, 32));
  const auto model = fit_tlearner(synth.cohort(), logistic_spec(), logistic_spec(), 1);
  const auto pred = predict_mu(model, synth.cohort());
  double e0 = 0.0, e1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    e0 += std::fabs(pred[i].mu.mu0 - synth.admissions[i].p0);
    e1 += std::fabs(pred[i].mu.mu1 - synth.admissions[i].p1);
  }
  EXPECT_LT(e0 / pred.size(), 0.03);
  EXPECT_LT(e1 / pred.size(), 0.03);
  EXPECT_GT(model.n_train_in_support, 15000u);
}

TEST(TLearner, OutOfSupportCasesAreFlagged) {
  const auto synth = generate_cohort(default_dgp_config(2000, 33));
  const auto model = fit_tlearner(synth.cohort(), logistic_spec(), logistic_spec(), 1);
  Cohort probe = synth.cohort();
  probe.admissions.resize(1);
  probe.admissions[0].treatment = 1;
  probe.admissions[0].outcome = 1;
  // Extreme covariates push the propensity outside the support.
  probe.admissions[0].covariates[0] = 40.0;
  const auto cases = pc_low_cases(model, probe);
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_FALSE(cases[0].in_support);
  EXPECT_FALSE(cases[0].pc_low);
}

TEST(TLearner, SingleOutcomeClassInArmFails) {
  auto c = oracle::make_cohort(oracle::continuous_schema(1), {{0.1}, {0.2}, {0.3}, {0.15}, {0.25}, {0.35}},
                               {0, 0, 0, 1, 1, 1}, {0, 0, 0, 0, 1, 0});
  EXPECT_THROW(fit_tlearner(c, logistic_spec(), logistic_spec(), 1), EstimationError);
}

TEST(TLearner, SerializationRoundTrip) {
  const auto synth = generate_cohort(default_dgp_config(1500, 34));
  for (const auto& spec : {logistic_spec(), small_forest()}) {
    const auto model = fit_tlearner(synth.cohort(), spec, spec, 9);
    std::stringstream ss;
    model.serialize(ss);
    const auto back = TLearnerModel::deserialize(ss);
    EXPECT_EQ(back.selection, model.selection);
    EXPECT_EQ(back.support.lower, model.support.lower);
    EXPECT_EQ(back.imputation.fill, model.imputation.fill);
    const auto a = predict_mu(model, synth.cohort());
    const auto b = predict_mu(back, synth.cohort());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].mu.mu0, b[i].mu.mu0);
      EXPECT_EQ(a[i].mu.mu1, b[i].mu.mu1);
      EXPECT_EQ(a[i].in_support, b[i].in_support);
    }
  }
  std::stringstream bad("CFADE-LEARNER-v1\n");
  EXPECT_THROW(TLearnerModel::deserialize(bad), ValidationError);
}

TEST(TLearner, DropsAdmissionsWithoutOutcome) {
  auto c = generate_cohort(default_dgp_config(1500, 35)).cohort();
  const auto ref = fit_tlearner(c, logistic_spec(), logistic_spec(), 2);
  Cohort extra = c;
  Admission pending = c.admissions[0];
  pending.admission_id = "pending";
  pending.outcome.reset();
  pending.covariates[0] = 100.0;
  extra.admissions.push_back(pending);
  const auto m = fit_tlearner(extra, logistic_spec(), logistic_spec(), 2);
  EXPECT_TRUE(m.model0 == ref.model0);
  EXPECT_TRUE(m.model1 == ref.model1);
}
