#pragma once

// Probabilistic binary classifiers used as T-learner base models and
// propensity models.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cfade {

/// Row-major design matrix with named columns (no intercept column).
struct FeatureMatrix {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
  std::vector<std::string> names;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

enum class LearnerKind { kLogistic, kRandomForest };

std::string_view to_string(LearnerKind kind);
LearnerKind parse_learner_kind(std::string_view token);

struct LogisticOptions {
  int max_iterations = 100;
  /// Convergence threshold on the change in penalized deviance.
  double tolerance = 1e-8;
  /// Ridge penalty on non-intercept coefficients.
  double ridge = 1e-6;
};

struct ForestOptions {
  int n_trees = 500;
  /// Candidate features per split; 0 means ceil(sqrt(p)).
  int mtry = 0;
  int min_leaf = 5;
  /// 0 means unlimited.
  int max_depth = 0;
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kLogistic;
  LogisticOptions logistic;
  ForestOptions forest;
  bool recalibrate = true;
  std::uint64_t seed = 0;

  /// Throws ValidationError when counts are non-positive or ridge < 0.
  void validate() const;
};

struct LogisticModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
  int iterations = 0;
  bool converged = false;
};

/// Flattened decision tree. Internal nodes route x[feature] <= threshold to
/// `left`, otherwise `right`; leaves have feature == -1 and carry the
/// positive-class proportion of their training rows in `value`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> row) const;
  int depth() const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
};

/// Platt map applied on the logit scale: p' = expit(intercept + slope * logit(p)).
struct Recalibration {
  double slope = 1.0;
  double intercept = 0.0;
};

class FittedLearner {
 public:
  FittedLearner() = default;
  FittedLearner(LearnerSpec spec, std::variant<LogisticModel, ForestModel> model,
                std::vector<std::string> feature_names);

  LearnerKind kind() const { return spec_.kind; }
  const LearnerSpec& spec() const { return spec_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::optional<Recalibration>& recalibration() const { return recalibration_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  const LogisticModel* logistic() const { return std::get_if<LogisticModel>(&model_); }
  const ForestModel* forest() const { return std::get_if<ForestModel>(&model_); }

  /// Raw model output before recalibration, clipped to [0, 1].
  std::vector<double> predict_raw(const FeatureMatrix& x) const;

  void set_recalibration(std::optional<Recalibration> r) { recalibration_ = r; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  void serialize(std::ostream& out) const;
  static FittedLearner deserialize(std::istream& in);

  friend bool operator==(const FittedLearner& a, const FittedLearner& b);

 private:
  LearnerSpec spec_;
  std::variant<LogisticModel, ForestModel> model_;
  std::vector<std::string> feature_names_;
  std::optional<Recalibration> recalibration_;
  std::vector<std::string> warnings_;
};

inline constexpr const char* kLearnerMagic = "CFADE-LEARNER-v1";

/// Numerically stable logistic function.
double expit(double eta);
/// Log-odds; the argument is clamped to [kProbFloor, 1 - kProbFloor].
double logit(double p);
inline constexpr double kProbFloor = 1e-6;

/// Ridge-penalized logistic regression by IRLS (Newton with step halving).
/// Main effects plus an unpenalized intercept. Non-convergence returns the
/// last iterate with a warning. A separation warning is attached when the
/// fitted probabilities reproduce the labels with near-certainty.
/// Throws ValidationError on zero rows, length mismatch, or a single class.
FittedLearner fit_logistic(const FeatureMatrix& x, std::span<const int> labels,
                           const LearnerSpec& spec);

/// Probability forest: Gini-split classification trees on bootstrap resamples,
/// prediction = mean leaf positive proportion. Per-tree randomness comes from
/// (spec.seed, tree index), so results do not depend on thread scheduling.
FittedLearner fit_random_forest(const FeatureMatrix& x, std::span<const int> labels,
                                const LearnerSpec& spec);

/// Dispatches on spec.kind and, when spec.recalibrate is set, fits the Platt
/// map on held-in predictions (out-of-bag predictions for forests).
FittedLearner fit_learner(const FeatureMatrix& x, std::span<const int> labels,
                          const LearnerSpec& spec);

/// Propensity model: same contract as fit_learner with treatment as label.
FittedLearner fit_propensity(const FeatureMatrix& x, std::span<const int> treatment,
                             const LearnerSpec& spec);

/// Per-row probabilities in [0, 1]. Columns are matched by name; throws
/// ValidationError listing missing names. Extra columns are an error too.
std::vector<double> predict_proba(const FittedLearner& learner, const FeatureMatrix& x);

/// Fits the Platt map on `predictions` vs `labels` and attaches it to a copy
/// of the learner. Constant predictions yield the identity map plus a warning.
FittedLearner recalibrate(const FittedLearner& learner, std::span<const double> predictions,
                          std::span<const int> labels);

/// Penalized log-likelihood gradient for a logistic model (intercept first).
/// Exposed for testing stationarity of the fit.
Eigen::VectorXd logistic_gradient(const FeatureMatrix& x, std::span<const int> labels,
                                  const LogisticModel& model, double ridge);

/// Penalized log-likelihood l(beta) - ridge/2 * |beta_{-0}|^2.
double logistic_penalized_loglik(const FeatureMatrix& x, std::span<const int> labels,
                                 const LogisticModel& model, double ridge);

}  // namespace cfade
