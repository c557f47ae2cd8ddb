#include "cfade/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "cfade/error.hpp"
#include "cfade/learners.hpp"

using namespace cfade;

TEST(Dgp, DefaultConfigIsValidAndLaidOut) {
  const auto c = default_dgp_config(500, 1);
  EXPECT_NO_THROW(c.validate());
  const auto schema = synthetic_schema(c);
  ASSERT_EQ(schema.size(), c.n_features());
  EXPECT_EQ(schema[0].name, "x1");
  EXPECT_EQ(schema[0].group, SelectionGroup::kCoreConfounder);
  EXPECT_EQ(schema[1].group, SelectionGroup::kLongitudinalParameter);
  EXPECT_EQ(schema[c.n_continuous].name, "b1");
  EXPECT_EQ(schema[c.n_continuous].kind, CovariateKind::kBinary);
  EXPECT_EQ(schema[schema.size() - 1].group, SelectionGroup::kNephrotoxin);
}

TEST(Dgp, ValidateRejectsBadSettings) {
  auto c = default_dgp_config(100, 1);
  c.baseline_coefficients.pop_back();
  EXPECT_THROW(c.validate(), ValidationError);
  c = default_dgp_config(100, 1);
  c.n_clusters = 101;
  EXPECT_THROW(c.validate(), ValidationError);
  c = default_dgp_config(100, 1);
  c.missingness_rate = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = default_dgp_config(100, 1);
  c.binary_prevalences = {0.5};
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Dgp, DeterministicPerSeed) {
  const auto a = generate_cohort(default_dgp_config(300, 42));
  const auto b = generate_cohort(default_dgp_config(300, 42));
  const auto c = generate_cohort(default_dgp_config(300, 43));
  EXPECT_EQ(a.cohort(), b.cohort());
  EXPECT_EQ(format_oracle(a.admissions), format_oracle(b.admissions));
  EXPECT_NE(a.cohort(), c.cohort());
}

TEST(Dgp, PrefixOfLargerCohortIsStable) {
  // Admission i only depends on its own stream (clusters aside).
  auto small = default_dgp_config(100, 9);
  auto large = default_dgp_config(200, 9);
  const auto a = generate_cohort(small);
  const auto b = generate_cohort(large);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.admissions[i].p0, b.admissions[i].p0);
    EXPECT_EQ(a.admissions[i].y1, b.admissions[i].y1);
  }
}

TEST(Dgp, MonotoneCouplingNeverPrevents) {
  const auto s = generate_cohort(default_dgp_config(5000, 3, Coupling::kMonotone));
  for (const auto& a : s.admissions) {
    EXPECT_GE(a.p1, a.p0);
    EXPECT_GE(a.y1, a.y0);
    EXPECT_EQ(*a.admission.outcome, a.admission.treatment == 1 ? a.y1 : a.y0);
  }
}

TEST(Dgp, MonotoneRejectsNegativeEffect) {
  auto c = default_dgp_config(200, 3, Coupling::kMonotone);
  c.effect_coefficients[0] = -2.0;
  EXPECT_THROW(generate_cohort(c), ValidationError);
  c.coupling = Coupling::kIndependent;
  EXPECT_NO_THROW(generate_cohort(c));
}

TEST(Dgp, IndependentCouplingDecorrelatesOutcomes) {
  const auto s = generate_cohort(default_dgp_config(40000, 5, Coupling::kIndependent));
  double both = 0.0, expected = 0.0;
  for (const auto& a : s.admissions) {
    both += a.y0 * a.y1;
    expected += a.p0 * a.p1;
  }
  const double n = static_cast<double>(s.admissions.size());
  EXPECT_NEAR(both / n, expected / n, 0.006);
}

TEST(Dgp, MarginalsMatchTrueProbabilities) {
  const auto s = generate_cohort(default_dgp_config(40000, 6));
  double t = 0.0, e = 0.0, y0 = 0.0, p0 = 0.0;
  for (const auto& a : s.admissions) {
    t += a.admission.treatment;
    e += a.true_propensity;
    y0 += a.y0;
    p0 += a.p0;
  }
  const double n = static_cast<double>(s.admissions.size());
  EXPECT_NEAR(t / n, e / n, 0.01);
  EXPECT_NEAR(y0 / n, p0 / n, 0.01);
}

TEST(Dgp, RisksFollowLogisticModel) {
  const auto c = default_dgp_config(50, 8);
  const auto s = generate_cohort(c);
  for (const auto& a : s.admissions) {
    double eta = c.baseline_coefficients[0];
    for (std::size_t j = 0; j < c.n_features(); ++j) eta += c.baseline_coefficients[j + 1] * *a.admission.covariates[j];
    EXPECT_NEAR(a.p0, 1.0 / (1.0 + std::exp(-eta)), 1e-14);
  }
}

TEST(Dgp, MissingnessRateAndClusters) {
  auto c = default_dgp_config(20000, 2);
  c.missingness_rate = 0.1;
  c.n_clusters = 15;
  const auto s = generate_cohort(c);
  double missing = 0.0, cells = 0.0;
  std::set<std::string> clusters;
  for (const auto& a : s.admissions) {
    clusters.insert(a.admission.cluster_id);
    for (const auto& v : a.admission.covariates) {
      missing += v ? 0.0 : 1.0;
      cells += 1.0;
    }
  }
  EXPECT_NEAR(missing / cells, 0.1, 0.005);
  EXPECT_EQ(clusters.size(), 15u);
  EXPECT_TRUE(clusters.contains("icu01"));
  EXPECT_EQ(s.admissions.front().admission.admission_id, "adm00001");
}

TEST(Dgp, TruePcDefinitions) {
  SyntheticAdmission a;
  a.p0 = 0.2;
  a.p1 = 0.5;
  a.admission.treatment = 1;
  a.admission.outcome = 1;
  a.coupling = Coupling::kMonotone;
  EXPECT_DOUBLE_EQ(true_pc(a), 0.6);
  a.coupling = Coupling::kIndependent;
  EXPECT_DOUBLE_EQ(true_pc(a), 0.8);
  a.admission.outcome = 0;
  EXPECT_THROW(true_pc(a), ValidationError);
}

TEST(Dgp, TrueAttIsTreatedMean) {
  const auto s = generate_cohort(default_dgp_config(1000, 4));
  double r0 = 0.0, r1 = 0.0, n = 0.0;
  for (const auto& a : s.admissions)
    if (a.admission.treatment == 1) {
      r0 += a.p0;
      r1 += a.p1;
      n += 1.0;
    }
  const auto att = true_att(s.admissions);
  EXPECT_NEAR(att.risk0, r0 / n, 1e-12);
  EXPECT_NEAR(att.risk1, r1 / n, 1e-12);
}

TEST(Dgp, OracleFileRoundTrip) {
  const auto tmp = std::filesystem::temp_directory_path() / "cfade_oracle_test.csv";
  auto c = default_dgp_config(200, 12, Coupling::kIndependent);
  const auto s = generate_cohort(c);
  write_oracle(s.admissions, tmp);
  const auto back = read_synthetic(s.cohort(), tmp, Coupling::kIndependent);
  ASSERT_EQ(back.admissions.size(), s.admissions.size());
  for (std::size_t i = 0; i < s.admissions.size(); ++i) {
    EXPECT_EQ(back.admissions[i].p0, s.admissions[i].p0);
    EXPECT_EQ(back.admissions[i].p1, s.admissions[i].p1);
    EXPECT_EQ(back.admissions[i].y0, s.admissions[i].y0);
    EXPECT_EQ(back.admissions[i].true_propensity, s.admissions[i].true_propensity);
  }
  std::filesystem::remove(tmp);
}

TEST(Dgp, CouplingTokens) {
  EXPECT_EQ(parse_coupling("monotone"), Coupling::kMonotone);
  EXPECT_EQ(parse_coupling("independent"), Coupling::kIndependent);
  EXPECT_THROW(parse_coupling("other"), ValidationError);
}
