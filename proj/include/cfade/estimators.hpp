#pragma once

// Common-support trimming, T-learner fitting, per-admission PC_low and the
// average treatment effect on the treated by T-learner averaging and IPTW.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfade/cohort.hpp"
#include "cfade/effect.hpp"
#include "cfade/learners.hpp"
#include "cfade/preprocess.hpp"

namespace cfade {

/// Propensity range shared by both arms (min-max rule).
struct SupportInterval {
  double lower = 0.0;
  double upper = 1.0;
  /// Row indices with a score strictly outside [lower, upper].
  std::vector<std::size_t> excluded;

  bool contains(double score) const { return score >= lower && score <= upper; }
};

/// lower = max of the arm minima, upper = min of the arm maxima. Throws
/// ValidationError if an arm is empty and EstimationError("no common
/// support") if lower > upper.
SupportInterval common_support(std::span<const double> scores, std::span<const int> treatment);

/// max(0, 1 - mu0/mu1). Throws EstimationError when mu1 == 0.
double pc_low(const MuPair& mu);

struct TLearnerModel {
  ImputationModel imputation;
  FittedLearner propensity;
  SupportInterval support;
  SelectionReport selection;
  /// Fitted on alternative-arm admissions only.
  FittedLearner model0;
  /// Fitted on vancomycin-arm admissions only.
  FittedLearner model1;
  /// Training admissions inside the support interval.
  std::size_t n_train_in_support = 0;

  void serialize(std::ostream& out) const;
  static TLearnerModel deserialize(std::istream& in);
};

inline constexpr const char* kTLearnerMagic = "CFADE-TLEARNER-v1";

/// impute -> propensity -> common-support trim -> variable selection ->
/// model0 on controls, model1 on treated (each recalibrated when the spec
/// asks for it). Admissions without an outcome are ignored. Everything is
/// estimated from `cohort` alone. Throws EstimationError when an arm has a
/// single outcome class after trimming.
TLearnerModel fit_tlearner(const Cohort& cohort, const LearnerSpec& learner,
                           const LearnerSpec& propensity, std::uint64_t seed);

struct MuPrediction {
  MuPair mu;
  double propensity = 0.0;
  bool in_support = true;
};

/// Both counterfactual risks for every admission regardless of its arm,
/// using the training imputation values and selected features.
std::vector<MuPrediction> predict_mu(const TLearnerModel& model, const Cohort& cohort);

/// Propensity scores of the model's propensity learner (imputed with the
/// training values).
std::vector<double> predict_propensity(const TLearnerModel& model, const Cohort& cohort);

struct CaseEstimate {
  std::string admission_id;
  MuPair mu;
  std::optional<double> err;
  /// nullopt when flagged out of support or mu1 == 0.
  std::optional<double> pc_low;
  bool in_support = true;
};

/// PC_low for treated admissions with the outcome. Out-of-support cases are
/// flagged and left unscored. No qualifying admission gives an empty vector.
std::vector<CaseEstimate> pc_low_cases(const TLearnerModel& model, const Cohort& cohort);

/// Same, from externally supplied mu (e.g. oracle risks); all in support.
std::vector<CaseEstimate> pc_low_cases(const Cohort& cohort, std::span<const MuPair> mu);

/// Mean mu0 / mu1 over treated admissions inside the support interval.
/// Throws EstimationError when there is none.
EffectEstimate att_tlearner(const TLearnerModel& model, const Cohort& cohort);

/// Mean mu0 / mu1 over treated rows of a precomputed prediction vector;
/// `include` (empty = all rows) restricts to rows inside the support.
EffectEstimate att_tlearner(const Cohort& cohort, std::span<const MuPair> mu,
                            const std::vector<bool>& include = {});

/// ATT weights: treated 1, controls e/(1-e) normalized to sum to one.
/// Throws ValidationError when an arm is empty or a control has score 1.
EffectEstimate att_iptw(std::span<const double> scores, std::span<const int> treatment,
                        std::span<const int> outcome);

/// Raw outcome incidence per arm (risk1 = treated mean, risk0 = control mean).
EffectEstimate att_unadjusted(std::span<const int> treatment, std::span<const int> outcome);

/// Treatment and outcome vectors of a cohort whose outcomes are all present.
std::vector<int> treatment_vector(const Cohort& cohort);
std::vector<int> outcome_vector(const Cohort& cohort);

/// Admissions that have an observed outcome.
Cohort with_outcomes(const Cohort& cohort);

}  // namespace cfade
