#include "cfade/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cfade/error.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

ImputationModel fit_imputation(const Cohort& cohort) {
  ImputationModel model;
  const auto& schema = cohort.schema;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    double sum = 0.0;
    std::size_t n = 0, ones = 0;
    for (const auto& a : cohort.admissions) {
      if (!a.covariates[j]) continue;
      sum += *a.covariates[j];
      ones += *a.covariates[j] == 1.0;
      ++n;
    }
    if (n == 0) throw ValidationError("cannot impute covariate '" + schema[j].name + "': no observed values");
    double fill;
    if (schema[j].kind == CovariateKind::kBinary) {
      // Median of 0/1 codes; exactly half ones resolves to 0.
      fill = 2 * ones > n ? 1.0 : 0.0;
    } else {
      fill = sum / static_cast<double>(n);
    }
    model.names.push_back(schema[j].name);
    model.fill.push_back(fill);
  }
  return model;
}

Cohort apply_imputation(const ImputationModel& model, const Cohort& cohort) {
  std::vector<double> fill(cohort.schema.size());
  for (std::size_t j = 0; j < cohort.schema.size(); ++j) {
    const auto it = std::find(model.names.begin(), model.names.end(), cohort.schema[j].name);
    if (it == model.names.end())
      throw ValidationError("imputation model has no value for covariate '" + cohort.schema[j].name + "'");
    fill[j] = model.fill[static_cast<std::size_t>(it - model.names.begin())];
  }
  Cohort out = cohort;
  for (auto& a : out.admissions)
    for (std::size_t j = 0; j < fill.size(); ++j)
      if (!a.covariates[j]) a.covariates[j] = fill[j];
  return out;
}

Cohort impute(const Cohort& cohort) { return apply_imputation(fit_imputation(cohort), cohort); }

PValue univariable_pvalue(std::span<const double> feature, std::span<const int> outcome,
                          const LogisticOptions& options) {
  if (feature.size() != outcome.size())
    throw ValidationError("univariable test: feature and outcome lengths differ");
  std::size_t ones = 0;
  for (int y : outcome) ones += y == 1;
  const std::size_t n = outcome.size();
  if (ones == 0 || ones == n) throw ValidationError("univariable test: outcome is constant");
  const auto [lo, hi] = std::minmax_element(feature.begin(), feature.end());
  if (*lo == *hi) return {1.0, true};

  const double m = static_cast<double>(ones) / static_cast<double>(n);
  const double ll_null = static_cast<double>(ones) * std::log(m) +
                         static_cast<double>(n - ones) * std::log1p(-m);

  FeatureMatrix x;
  x.names = {"feature"};
  x.values.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) x.values(static_cast<Eigen::Index>(i), 0) = feature[i];
  LearnerSpec spec;
  spec.logistic = options;
  spec.recalibrate = false;
  const auto fit = fit_logistic(x, outcome, spec);
  // Unpenalized log-likelihood at the (ridge-bounded) estimate.
  const double ll_full = logistic_penalized_loglik(x, outcome, *fit.logistic(), 0.0);
  const double stat = std::max(0.0, 2.0 * (ll_full - ll_null));
  return {std::erfc(std::sqrt(stat / 2.0)), false};
}

std::string SelectionReport::to_text() const {
  std::ostringstream out;
  out << "# variable selection\n";
  out << "removed_by_prevalence " << removed_by_prevalence.size() << '\n';
  for (const auto& n : removed_by_prevalence) out << n << '\n';
  out << "removed_by_pvalue " << removed_by_pvalue.size() << '\n';
  for (const auto& [n, p] : removed_by_pvalue) out << n << ' ' << text::format_significant(p, 6) << '\n';
  out << "retained " << retained.size() << '\n';
  for (const auto& n : retained) out << n << '\n';
  return out.str();
}

SelectionReport select_variables(const Cohort& cohort, const SelectionOptions& options) {
  const auto& schema = cohort.schema;
  std::vector<int> outcome;
  outcome.reserve(cohort.size());
  for (const auto& a : cohort.admissions) {
    if (!a.outcome) throw ValidationError("variable selection: admission " + a.admission_id + " has no outcome");
    outcome.push_back(*a.outcome);
  }
  if (cohort.empty()) throw ValidationError("variable selection on an empty cohort");

  SelectionReport report;
  std::vector<double> column(cohort.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& spec = schema[j];
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const auto& v = cohort.admissions[i].covariates[j];
      if (!v) throw ValidationError("variable selection: covariate '" + spec.name + "' has missing values; impute first");
      column[i] = *v;
    }
    if (spec.kind == CovariateKind::kBinary) {
      double ones = 0.0;
      for (double v : column) ones += v;
      if (ones / static_cast<double>(column.size()) < options.min_prevalence) {
        report.removed_by_prevalence.push_back(spec.name);
        continue;
      }
    }
    if (spec.group != SelectionGroup::kCoreConfounder) {
      const auto p = univariable_pvalue(column, outcome);
      if (p.value > options.max_pvalue) {
        report.removed_by_pvalue.emplace_back(spec.name, p.value);
        continue;
      }
    }
    report.retained.push_back(spec.name);
  }
  if (report.retained.empty()) throw EstimationError("variable selection removed every covariate");
  return report;
}

FeatureMatrix feature_matrix(const Cohort& cohort, std::span<const std::string> names) {
  FeatureMatrix x;
  x.names.assign(names.begin(), names.end());
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(cohort.schema.require(n));
  x.values.resize(static_cast<Eigen::Index>(cohort.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& a = cohort.admissions[i];
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto& v = a.covariates[cols[k]];
      if (!v) throw ValidationError("admission " + a.admission_id + ": missing value in '" + names[k] + "'");
      x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = *v;
    }
  }
  return x;
}

std::vector<std::string> covariate_names(const CovariateSchema& schema) {
  std::vector<std::string> names;
  for (const auto& c : schema.covariates()) names.push_back(c.name);
  return names;
}

}  // namespace cfade
