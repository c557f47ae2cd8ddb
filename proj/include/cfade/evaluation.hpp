#pragma once

// Factual and counterfactual evaluation metrics.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfade/estimators.hpp"

namespace cfade {

/// Causality categories of an expert assessment.
enum class ExpertCategory { kUnassessable, kUnlikely, kPossible, kProbable, kNearlyCertain };

std::string_view to_string(ExpertCategory category);
/// Accepts exactly the lowercase tokens unassessable, unlikely, possible,
/// probable, nearly_certain. Throws ValidationError otherwise.
ExpertCategory parse_expert_category(std::string_view token);

struct ExpertAssessment {
  std::string admission_id;
  ExpertCategory category;
};

/// unassessable 0.5, unlikely 0.25, possible 0.5, probable 0.75,
/// nearly_certain 0.9.
double map_expert_label(ExpertCategory category);
/// 0 for unlikely, 1 otherwise.
int dichotomize_label(ExpertCategory category);

/// Header "admission_id,category". Throws ValidationError on unknown
/// categories or duplicate ids.
std::vector<ExpertAssessment> read_assessments(const std::filesystem::path& path);
std::string format_assessments(std::span<const ExpertAssessment> assessments);

/// Mann-Whitney AUC: (concordant + 0.5 * tied) / (n_pos * n_neg).
/// Throws ValidationError when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of label 1 among scores >= threshold; nullopt when no score
/// reaches the threshold.
std::optional<double> ppv(std::span<const double> scores, std::span<const int> labels,
                          double threshold = 0.5);

double mse(std::span<const double> predictions, std::span<const double> targets);

/// Sample Pearson correlation; nullopt when either vector is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct FactualAuc {
  /// model1 on treated rows.
  std::optional<double> treated;
  /// model0 on control rows.
  std::optional<double> control;
};

/// AUC of each base model on its own arm of the test cohort (rows with an
/// observed outcome). An arm with a single outcome class yields nullopt.
FactualAuc evaluate_factual(const TLearnerModel& model, const Cohort& test);

struct AgreementCase {
  std::string admission_id;
  double pc_low = 0.0;
  double mapped_probability = 0.0;
  int dichotomized = 0;
};

struct AgreementReport {
  double mse = 0.0;
  std::optional<double> auc;
  std::optional<double> ppv;
  std::size_t n_cases = 0;
  std::vector<AgreementCase> cases;
};

/// Compares scored PC_low cases with expert assessments: MSE against mapped
/// probabilities, AUC and PPV against dichotomized labels. Unscored cases
/// (out of support) are skipped. Throws ValidationError listing case ids
/// without an assessment, EstimationError when no scored case remains.
AgreementReport evaluate_counterfactual(std::span<const CaseEstimate> cases,
                                        std::span<const ExpertAssessment> assessments);

inline constexpr std::size_t kHistogramBins = 20;

struct Histogram {
  /// counts[arm][bin] over 20 equal-width bins on [0, 1]; the last bin is closed.
  std::array<std::array<std::size_t, kHistogramBins>, 2> counts{};

  static double bin_lower(std::size_t bin) { return static_cast<double>(bin) / kHistogramBins; }
  std::string to_csv() const;
};

Histogram propensity_histogram(std::span<const double> scores, std::span<const int> treatment);

/// Single-group histogram (e.g. PC_low values) in the same binning.
std::array<std::size_t, kHistogramBins> histogram_counts(std::span<const double> values);

}  // namespace cfade
