#pragma once

// Cohort data model and the target-trial eligibility rule engine.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfade {

enum class CovariateKind { kContinuous, kBinary };

/// Grouping that drives automated variable selection: core confounders are
/// never dropped for weak univariable association.
enum class SelectionGroup { kCoreConfounder, kLongitudinalParameter, kNephrotoxin };

std::string_view to_string(CovariateKind kind);
std::string_view to_string(SelectionGroup group);
CovariateKind parse_covariate_kind(std::string_view token);
SelectionGroup parse_selection_group(std::string_view token);

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::kContinuous;
  SelectionGroup group = SelectionGroup::kCoreConfounder;
  std::string unit;

  friend bool operator==(const CovariateSpec&, const CovariateSpec&) = default;
};

/// Ordered list of covariates with unique names.
class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<CovariateSpec> covariates);

  std::size_t size() const { return covariates_.size(); }
  bool empty() const { return covariates_.empty(); }
  const CovariateSpec& operator[](std::size_t i) const { return covariates_[i]; }
  const std::vector<CovariateSpec>& covariates() const { return covariates_; }

  /// Column index of a covariate name, or nullopt.
  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Like index_of but throws ValidationError for unknown names.
  std::size_t require(std::string_view name) const;

  friend bool operator==(const CovariateSchema&, const CovariateSchema&) = default;

 private:
  std::vector<CovariateSpec> covariates_;
};

/// One ICU admission. Covariates follow schema order; nullopt = missing.
/// treatment: 0 = alternative antibiotic, 1 = vancomycin.
/// outcome: 0 = no AKI, 1 = AKI, nullopt for prediction-only records.
struct Admission {
  std::string admission_id;
  std::string cluster_id;
  std::vector<std::optional<double>> covariates;
  int treatment = 0;
  std::optional<int> outcome;

  friend bool operator==(const Admission&, const Admission&) = default;
};

struct Cohort {
  CovariateSchema schema;
  std::vector<Admission> admissions;

  std::size_t size() const { return admissions.size(); }
  bool empty() const { return admissions.empty(); }

  /// Throws ValidationError on duplicate ids, bad treatment/outcome codes,
  /// wrong covariate count, or non-binary values in binary columns.
  void validate() const;

  /// Sub-cohort with the admissions at the given row indices, in that order.
  Cohort subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

// ---------------------------------------------------------------------------
// Eligibility

/// Admission plus the fields the eligibility rules look at.
struct RawAdmissionRecord {
  double age_years = 0.0;
  bool dialysis_dependent_at_admission = false;
  bool aki_at_baseline = false;
  /// Hours between ICU admission and treatment initiation.
  double treatment_initiation_hour = 0.0;
  /// Switched to the other arm after initiation.
  bool other_option_initiated_after = false;
  Admission admission;
};

/// Rules in evaluation order.
enum class EligibilityRule {
  kAdult,
  kNotDialysisDependent,
  kAkiFreeAtBaseline,
  kInitiationWindow,
  kNoTreatmentSwitch,
};

std::string_view to_string(EligibilityRule rule);

inline constexpr double kMinAgeYears = 18.0;
inline constexpr double kEarliestInitiationHour = 24.0;
inline constexpr double kLatestInitiationHour = 7.0 * 24.0;

/// First rule the record fails, or nullopt if eligible.
std::optional<EligibilityRule> first_failing_rule(const RawAdmissionRecord& record);

struct Exclusion {
  std::string admission_id;
  EligibilityRule rule;

  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

struct EligibilityResult {
  Cohort cohort;
  std::vector<Exclusion> excluded;
};

/// Applies the five protocol rules in fixed order. Every input record ends up
/// either in the cohort or in the exclusion log (first failing rule only).
/// Throws ValidationError on duplicate admission ids or malformed records.
EligibilityResult apply_eligibility(const CovariateSchema& schema,
                                    std::span<const RawAdmissionRecord> records);

/// "admission_id,rule" lines with a header.
std::string format_exclusion_log(std::span<const Exclusion> excluded);

// ---------------------------------------------------------------------------
// Baseline summary

struct ContinuousSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t n_observed = 0;
};

struct BinarySummary {
  std::size_t count = 0;
  double percent = 0.0;
  std::size_t n_observed = 0;
};

struct SummaryRow {
  std::string covariate;
  CovariateKind kind = CovariateKind::kContinuous;
  // Index 0 = alternative arm, 1 = vancomycin arm.
  ContinuousSummary continuous[2];
  BinarySummary binary[2];
};

struct SummaryTable {
  std::size_t arm_size[2] = {0, 0};
  std::vector<SummaryRow> rows;

  /// Comma-delimited rendering: continuous as "median (Q1 - Q3)" and binary
  /// as "count (percent)", one decimal each.
  std::string to_csv() const;
};

/// Type-7 sample quantile (linear interpolation between order statistics).
/// `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Per-arm baseline characteristics. Missing covariate values are skipped;
/// percentages use the arm size as denominator. Throws ValidationError when
/// either arm is empty.
SummaryTable cohort_summary(const Cohort& cohort);

// ---------------------------------------------------------------------------
// Files

/// Schema file: one covariate per line, "name,kind,selection_group,unit".
/// A header line starting with "name," and lines starting with '#' are skipped.
CovariateSchema read_schema(const std::filesystem::path& path);
std::string format_schema(const CovariateSchema& schema);
void write_schema(const CovariateSchema& schema, const std::filesystem::path& path);

/// Cohort file: header admission_id,cluster_id,treatment,outcome,<covariates>;
/// empty cell = missing. Errors name the offending row and column.
Cohort parse_cohort(const std::vector<std::string>& lines, const CovariateSchema& schema,
                    std::string_view source = "<memory>");
Cohort read_cohort(const std::filesystem::path& path, const CovariateSchema& schema);
Cohort read_cohort(const std::filesystem::path& path, const std::filesystem::path& schema_path);
std::string format_cohort(const Cohort& cohort);
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);

}  // namespace cfade
