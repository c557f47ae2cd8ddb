#pragma once

// Missing-data imputation and automated variable selection. Both are fitted
// on training data only and re-run inside every bootstrap replication.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfade/cohort.hpp"
#include "cfade/learners.hpp"

namespace cfade {

/// Per-covariate fill values learned from observed training values:
/// arithmetic mean for continuous covariates, median for binary ones
/// (a tie at exactly 0.5 resolves to 0).
struct ImputationModel {
  std::vector<std::string> names;
  std::vector<double> fill;
};

/// Throws ValidationError naming any covariate with no observed value.
ImputationModel fit_imputation(const Cohort& cohort);

/// Fills missing covariates with the model's values, matched by name.
/// Treatment and outcome are never touched; observed values stay bit-identical.
Cohort apply_imputation(const ImputationModel& model, const Cohort& cohort);

/// fit_imputation + apply_imputation on the same cohort.
Cohort impute(const Cohort& cohort);

struct PValue {
  double value = 1.0;
  /// Set when the feature is constant; value is then 1 by convention.
  bool constant_feature = false;
};

/// Likelihood-ratio test of outcome ~ feature against the intercept-only
/// logistic model, referred to chi-square with 1 degree of freedom.
/// Throws ValidationError on length mismatch or constant outcome.
PValue univariable_pvalue(std::span<const double> feature, std::span<const int> outcome,
                          const LogisticOptions& options = {});

struct SelectionOptions {
  /// Binary covariates with prevalence strictly below this are removed.
  double min_prevalence = 0.02;
  /// Longitudinal parameters and nephrotoxins with p strictly above this are removed.
  double max_pvalue = 0.2;
};

struct SelectionReport {
  std::vector<std::string> removed_by_prevalence;
  std::vector<std::pair<std::string, double>> removed_by_pvalue;
  std::vector<std::string> retained;

  /// Line-oriented report; p-values with 6 significant digits.
  std::string to_text() const;

  friend bool operator==(const SelectionReport&, const SelectionReport&) = default;
};

/// Step 1 drops rare binary covariates (any group); step 2 drops
/// longitudinal parameters and nephrotoxins weakly associated with the
/// outcome. Core confounders are exempt from step 2. Requires an imputed
/// cohort with every outcome present; throws EstimationError when nothing
/// is retained.
SelectionReport select_variables(const Cohort& cohort, const SelectionOptions& options = {});

/// Dense feature matrix for the named covariates. Throws ValidationError on
/// unknown names or missing values (impute first).
FeatureMatrix feature_matrix(const Cohort& cohort, std::span<const std::string> names);

/// All schema covariates in schema order.
std::vector<std::string> covariate_names(const CovariateSchema& schema);

}  // namespace cfade
