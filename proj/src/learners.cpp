#include "cfade/learners.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cfade/error.hpp"
#include "cfade/parallel.hpp"
#include "cfade/text_io.hpp"
#include "cfade/tree_builder.hpp"

namespace cfade {

std::string_view to_string(LearnerKind kind) {
  return kind == LearnerKind::kRandomForest ? "random_forest" : "logistic";
}

LearnerKind parse_learner_kind(std::string_view token) {
  if (token == "logistic" || token == "lr") return LearnerKind::kLogistic;
  if (token == "random_forest" || token == "rf") return LearnerKind::kRandomForest;
  throw ValidationError("unknown learner kind '" + std::string(token) + "'");
}

void LearnerSpec::validate() const {
  if (logistic.max_iterations <= 0) throw ValidationError("max_iterations must be positive");
  if (!(logistic.tolerance > 0.0)) throw ValidationError("tolerance must be positive");
  if (!(logistic.ridge >= 0.0)) throw ValidationError("ridge penalty must be >= 0");
  if (forest.n_trees <= 0) throw ValidationError("n_trees must be positive");
  if (forest.mtry < 0) throw ValidationError("mtry must be >= 0");
  if (forest.min_leaf <= 0) throw ValidationError("min_leaf must be positive");
  if (forest.max_depth < 0) throw ValidationError("max_depth must be >= 0");
}

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) {
  p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  return std::log(p / (1.0 - p));
}

// ---------------------------------------------------------------------------
// Trees

double DecisionTree::predict(std::span<const double> row) const {
  int n = 0;
  for (;;) {
    const TreeNode& node = nodes[static_cast<std::size_t>(n)];
    if (node.feature < 0) return node.value;
    n = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// FittedLearner

FittedLearner::FittedLearner(LearnerSpec spec, std::variant<LogisticModel, ForestModel> model,
                             std::vector<std::string> feature_names)
    : spec_(spec), model_(std::move(model)), feature_names_(std::move(feature_names)) {}

std::vector<double> FittedLearner::predict_raw(const FeatureMatrix& x) const {
  std::vector<double> out(x.rows(), 0.0);
  if (const auto* lr = logistic()) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double eta = lr->intercept;
      for (std::size_t j = 0; j < lr->coefficients.size(); ++j)
        eta += lr->coefficients[j] * x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out[i] = expit(eta);
    }
  } else if (const auto* rf = forest()) {
    const double scale = 1.0 / static_cast<double>(rf->trees.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::span<const double> row(x.values.data() + i * x.cols(), x.cols());
      double sum = 0.0;
      for (const auto& tree : rf->trees) sum += tree.predict(row);
      out[i] = sum * scale;
    }
  }
  for (double& p : out) p = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.5;
  return out;
}

bool operator==(const FittedLearner& a, const FittedLearner& b) {
  std::ostringstream sa, sb;
  a.serialize(sa);
  b.serialize(sb);
  return sa.str() == sb.str();
}

namespace {

using text::format_double;

void expect_token(std::istream& in, std::string_view expected) {
  std::string tok;
  if (!(in >> tok) || tok != expected)
    throw ValidationError("learner file: expected '" + std::string(expected) + "', got '" + tok +
                          "'");
}

template <typename T>
T read_value(std::istream& in, std::string_view what) {
  std::string tok;
  if (!(in >> tok)) throw ValidationError("learner file: truncated while reading " + std::string(what));
  if constexpr (std::is_same_v<T, std::string>) {
    return tok;
  } else if constexpr (std::is_same_v<T, double>) {
    if (tok == "NA") return std::numeric_limits<double>::quiet_NaN();
    auto v = text::parse_double(tok);
    if (!v) throw ValidationError("learner file: bad number for " + std::string(what) + ": " + tok);
    return *v;
  } else {
    try {
      std::size_t pos = 0;
      T v;
      if constexpr (std::is_unsigned_v<T>) {
        if (tok.front() == '-') throw std::invalid_argument(tok);
        v = static_cast<T>(std::stoull(tok, &pos));
      } else {
        v = static_cast<T>(std::stoll(tok, &pos));
      }
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("learner file: bad integer for " + std::string(what) + ": " + tok);
    }
  }
}

}  // namespace

void FittedLearner::serialize(std::ostream& out) const {
  out << kLearnerMagic << '\n';
  out << "kind " << to_string(spec_.kind) << '\n';
  out << "spec max_iterations " << spec_.logistic.max_iterations << " tolerance "
      << format_double(spec_.logistic.tolerance) << " ridge " << format_double(spec_.logistic.ridge)
      << " n_trees " << spec_.forest.n_trees << " mtry " << spec_.forest.mtry << " min_leaf "
      << spec_.forest.min_leaf << " max_depth " << spec_.forest.max_depth << " recalibrate "
      << (spec_.recalibrate ? 1 : 0) << " seed " << spec_.seed << '\n';
  out << "features " << feature_names_.size() << '\n';
  for (const auto& n : feature_names_) out << n << '\n';
  if (recalibration_) {
    out << "recalibration 1 " << format_double(recalibration_->slope) << ' '
        << format_double(recalibration_->intercept) << '\n';
  } else {
    out << "recalibration 0\n";
  }
  if (const auto* lr = logistic()) {
    out << "logistic " << lr->iterations << ' ' << (lr->converged ? 1 : 0) << ' '
        << format_double(lr->intercept);
    for (double c : lr->coefficients) out << ' ' << format_double(c);
    out << '\n';
  } else if (const auto* rf = forest()) {
    out << "forest " << rf->trees.size() << '\n';
    for (const auto& t : rf->trees) {
      out << "tree " << t.nodes.size() << '\n';
      for (const auto& n : t.nodes)
        out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right
            << ' ' << format_double(n.value) << '\n';
    }
  }
  out << "warnings " << warnings_.size() << '\n';
  for (const auto& w : warnings_) out << w << '\n';
  out << "end\n";
}

FittedLearner FittedLearner::deserialize(std::istream& in) {
  std::string magic;
  if (!(in >> magic) || magic != kLearnerMagic)
    throw ValidationError("learner file: missing '" + std::string(kLearnerMagic) + "' header");
  expect_token(in, "kind");
  LearnerSpec spec;
  spec.kind = parse_learner_kind(read_value<std::string>(in, "kind"));
  expect_token(in, "spec");
  expect_token(in, "max_iterations");
  spec.logistic.max_iterations = read_value<int>(in, "max_iterations");
  expect_token(in, "tolerance");
  spec.logistic.tolerance = read_value<double>(in, "tolerance");
  expect_token(in, "ridge");
  spec.logistic.ridge = read_value<double>(in, "ridge");
  expect_token(in, "n_trees");
  spec.forest.n_trees = read_value<int>(in, "n_trees");
  expect_token(in, "mtry");
  spec.forest.mtry = read_value<int>(in, "mtry");
  expect_token(in, "min_leaf");
  spec.forest.min_leaf = read_value<int>(in, "min_leaf");
  expect_token(in, "max_depth");
  spec.forest.max_depth = read_value<int>(in, "max_depth");
  expect_token(in, "recalibrate");
  spec.recalibrate = read_value<int>(in, "recalibrate") != 0;
  expect_token(in, "seed");
  spec.seed = read_value<std::uint64_t>(in, "seed");

  expect_token(in, "features");
  const auto n_features = read_value<std::size_t>(in, "feature count");
  std::vector<std::string> names(n_features);
  for (auto& n : names) n = read_value<std::string>(in, "feature name");

  expect_token(in, "recalibration");
  std::optional<Recalibration> recal;
  if (read_value<int>(in, "recalibration flag") != 0) {
    Recalibration r;
    r.slope = read_value<double>(in, "slope");
    r.intercept = read_value<double>(in, "intercept");
    recal = r;
  }

  std::variant<LogisticModel, ForestModel> model;
  const auto body = read_value<std::string>(in, "model kind");
  if (body == "logistic") {
    LogisticModel lr;
    lr.iterations = read_value<int>(in, "iterations");
    lr.converged = read_value<int>(in, "converged") != 0;
    lr.intercept = read_value<double>(in, "intercept");
    lr.coefficients.resize(n_features);
    for (auto& c : lr.coefficients) c = read_value<double>(in, "coefficient");
    model = std::move(lr);
  } else if (body == "forest") {
    ForestModel rf;
    rf.trees.resize(read_value<std::size_t>(in, "tree count"));
    for (auto& t : rf.trees) {
      expect_token(in, "tree");
      t.nodes.resize(read_value<std::size_t>(in, "node count"));
      for (auto& n : t.nodes) {
        n.feature = read_value<int>(in, "node feature");
        n.threshold = read_value<double>(in, "node threshold");
        n.left = read_value<int>(in, "node left");
        n.right = read_value<int>(in, "node right");
        n.value = read_value<double>(in, "node value");
        const int limit = static_cast<int>(t.nodes.size());
        if (n.feature >= static_cast<int>(n_features) ||
            (n.feature >= 0 && (n.left <= 0 || n.left >= limit || n.right <= 0 || n.right >= limit)))
          throw ValidationError("learner file: corrupt tree node");
      }
    }
    model = std::move(rf);
  } else {
    throw ValidationError("learner file: unknown model body '" + body + "'");
  }
  if ((body == "forest") != (spec.kind == LearnerKind::kRandomForest))
    throw ValidationError("learner file: model body does not match kind");

  FittedLearner learner(spec, std::move(model), std::move(names));
  learner.recalibration_ = recal;
  expect_token(in, "warnings");
  const auto n_warnings = read_value<std::size_t>(in, "warning count");
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < n_warnings; ++i) {
    std::getline(in, line);
    learner.warnings_.push_back(line);
  }
  expect_token(in, "end");
  return learner;
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

void check_training_input(const FeatureMatrix& x, std::span<const int> labels) {
  if (x.rows() == 0) throw ValidationError("cannot fit on zero rows");
  if (x.rows() != labels.size())
    throw ValidationError("feature rows (" + std::to_string(x.rows()) +
                          ") do not match label count (" + std::to_string(labels.size()) + ")");
  if (x.names.size() != x.cols()) throw ValidationError("feature names do not match columns");
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y == 0) has0 = true;
    else if (y == 1) has1 = true;
    else throw ValidationError("labels must be 0 or 1");
  }
  if (!has0 || !has1) throw ValidationError("cannot fit: labels contain a single class");
  if (!x.values.allFinite()) throw ValidationError("features contain non-finite values");
}

Eigen::MatrixXd design_with_intercept(const FeatureMatrix& x) {
  Eigen::MatrixXd d(x.values.rows(), x.values.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.values.cols()) = x.values;
  return d;
}

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double penalized_loglik(const Eigen::MatrixXd& design, std::span<const int> y,
                        const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll += y[static_cast<std::size_t>(i)] * eta(i) - log1pexp(eta(i));
  return ll - 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
}

Eigen::VectorXd penalized_gradient(const Eigen::MatrixXd& design, std::span<const int> y,
                                   const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = design * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    resid(i) = y[static_cast<std::size_t>(i)] - expit(eta(i));
  Eigen::VectorXd g = design.transpose() * resid;
  g.tail(g.size() - 1) -= ridge * beta.tail(beta.size() - 1);
  return g;
}

LogisticModel to_model(const Eigen::VectorXd& beta) {
  LogisticModel m;
  m.intercept = beta(0);
  m.coefficients.assign(beta.data() + 1, beta.data() + beta.size());
  return m;
}

Eigen::VectorXd to_beta(const LogisticModel& m) {
  Eigen::VectorXd beta(static_cast<Eigen::Index>(m.coefficients.size() + 1));
  beta(0) = m.intercept;
  for (std::size_t j = 0; j < m.coefficients.size(); ++j)
    beta(static_cast<Eigen::Index>(j + 1)) = m.coefficients[j];
  return beta;
}

constexpr double kGradientTolerance = 1e-6;

}  // namespace

Eigen::VectorXd logistic_gradient(const FeatureMatrix& x, std::span<const int> labels,
                                  const LogisticModel& model, double ridge) {
  return penalized_gradient(design_with_intercept(x), labels, to_beta(model), ridge);
}

double logistic_penalized_loglik(const FeatureMatrix& x, std::span<const int> labels,
                                 const LogisticModel& model, double ridge) {
  return penalized_loglik(design_with_intercept(x), labels, to_beta(model), ridge);
}

FittedLearner fit_logistic(const FeatureMatrix& x, std::span<const int> labels,
                           const LearnerSpec& spec) {
  spec.validate();
  check_training_input(x, labels);
  const Eigen::MatrixXd design = design_with_intercept(x);
  const Eigen::Index p = design.cols();
  const double ridge = spec.logistic.ridge;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double mean_y = 0.0;
  for (int y : labels) mean_y += y;
  mean_y /= static_cast<double>(labels.size());
  beta(0) = std::log(mean_y / (1.0 - mean_y));

  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, ridge);
  penalty(0) = 0.0;

  double ll = penalized_loglik(design, labels, beta, ridge);
  LogisticModel result;
  bool converged = false;
  int iter = 0;
  while (iter < spec.logistic.max_iterations) {
    ++iter;
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd w(eta.size()), resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = expit(eta(i));
      w(i) = std::max(mu * (1.0 - mu), 1e-300);
      resid(i) = labels[static_cast<std::size_t>(i)] - mu;
    }
    Eigen::VectorXd grad = design.transpose() * resid - penalty.cwiseProduct(beta);
    Eigen::MatrixXd hessian = design.transpose() * w.asDiagonal() * design;
    hessian.diagonal() += penalty;
    // Keeps the system solvable when a column is constant and ridge == 0.
    hessian.diagonal().array() += 1e-12 * (1.0 + hessian.diagonal().array().abs());
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);

    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = penalized_loglik(design, labels, candidate, ridge);
    int halvings = 0;
    while (!(ll_new >= ll) && halvings < 50) {
      scale *= 0.5;
      candidate = beta + scale * step;
      ll_new = penalized_loglik(design, labels, candidate, ridge);
      ++halvings;
    }
    if (!(ll_new >= ll)) {
      // No ascent possible: we are at the numerical optimum.
      const double gmax = grad.cwiseAbs().maxCoeff();
      converged = gmax < kGradientTolerance;
      break;
    }
    const double dev_change = 2.0 * std::abs(ll_new - ll);
    beta = candidate;
    ll = ll_new;
    if (dev_change / (2.0 * std::abs(ll) + 0.1) < spec.logistic.tolerance) {
      const double gmax = penalized_gradient(design, labels, beta, ridge).cwiseAbs().maxCoeff();
      if (gmax < kGradientTolerance) {
        converged = true;
        break;
      }
    }
  }
  result = to_model(beta);
  result.iterations = iter;
  result.converged = converged;

  FittedLearner learner(spec, result, x.names);
  if (!converged)
    learner.add_warning("logistic fit did not converge after " + std::to_string(iter) +
                        " iterations");
  // Complete separation: the fitted hyperplane classifies every row strictly.
  const Eigen::VectorXd eta = design * beta;
  bool separated = true;
  for (Eigen::Index i = 0; i < eta.size() && separated; ++i)
    separated = labels[static_cast<std::size_t>(i)] == 1 ? eta(i) > 0.0 : eta(i) < 0.0;
  if (separated) learner.add_warning("complete separation; coefficients bounded by ridge penalty");
  return learner;
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

struct ForestFit {
  FittedLearner learner;
  std::vector<double> oob;
};

ForestFit fit_forest_with_oob(const FeatureMatrix& x, std::span<const int> labels,
                              const LearnerSpec& spec) {
  spec.validate();
  check_training_input(x, labels);
  const detail::BinnedFeatures binned(x);
  const std::size_t n = x.rows();
  const auto n_trees = static_cast<std::size_t>(spec.forest.n_trees);
  ForestOptions options = spec.forest;
  if (options.mtry == 0)
    options.mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  options.mtry = std::clamp(options.mtry, 1, static_cast<int>(std::max<std::size_t>(1, x.cols())));

  ForestModel forest;
  forest.trees.resize(n_trees);
  std::vector<std::vector<std::uint32_t>> in_bag(n_trees);
  parallel_for(n_trees, [&](std::size_t t) {
    Rng rng = make_rng(spec.seed, t);
    std::vector<std::uint32_t> rows(n);
    for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, n));
    in_bag[t] = rows;
    forest.trees[t] = detail::grow_tree(binned, labels, std::move(rows), options, rng);
  });

  // Out-of-bag predictions, accumulated in tree order.
  std::vector<double> oob_sum(n, 0.0);
  std::vector<std::uint32_t> oob_count(n, 0);
  std::vector<char> bag(n);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::fill(bag.begin(), bag.end(), 0);
    for (auto r : in_bag[t]) bag[r] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (bag[i]) continue;
      oob_sum[i] += forest.trees[t].predict({x.values.data() + i * x.cols(), x.cols()});
      ++oob_count[i];
    }
  }
  FittedLearner learner(spec, std::move(forest), x.names);
  const auto full = learner.predict_raw(x);
  std::vector<double> oob(n);
  for (std::size_t i = 0; i < n; ++i)
    oob[i] = oob_count[i] > 0 ? oob_sum[i] / oob_count[i] : full[i];
  return {std::move(learner), std::move(oob)};
}

}  // namespace

FittedLearner fit_random_forest(const FeatureMatrix& x, std::span<const int> labels,
                                const LearnerSpec& spec) {
  return fit_forest_with_oob(x, labels, spec).learner;
}

// ---------------------------------------------------------------------------
// Recalibration and prediction

FittedLearner recalibrate(const FittedLearner& learner, std::span<const double> predictions,
                          std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ValidationError("recalibration: predictions and labels differ in length");
  FittedLearner out = learner;
  const auto [lo, hi] = std::minmax_element(predictions.begin(), predictions.end());
  if (predictions.empty() || logit(*lo) == logit(*hi)) {
    out.set_recalibration(Recalibration{});
    out.add_warning("recalibration skipped: constant predictions; identity map used");
    return out;
  }
  FeatureMatrix z;
  z.names = {"logit"};
  z.values.resize(static_cast<Eigen::Index>(predictions.size()), 1);
  for (std::size_t i = 0; i < predictions.size(); ++i)
    z.values(static_cast<Eigen::Index>(i), 0) = logit(predictions[i]);
  LearnerSpec platt;
  platt.logistic = learner.spec().logistic;
  platt.recalibrate = false;
  try {
    const auto fit = fit_logistic(z, labels, platt);
    const auto* m = fit.logistic();
    out.set_recalibration(Recalibration{m->coefficients[0], m->intercept});
  } catch (const ValidationError& e) {
    out.set_recalibration(Recalibration{});
    out.add_warning(std::string("recalibration skipped: ") + e.what() + "; identity map used");
  }
  return out;
}

FittedLearner fit_learner(const FeatureMatrix& x, std::span<const int> labels,
                          const LearnerSpec& spec) {
  if (spec.kind == LearnerKind::kLogistic) {
    auto learner = fit_logistic(x, labels, spec);
    if (!spec.recalibrate) return learner;
    return recalibrate(learner, learner.predict_raw(x), labels);
  }
  auto fit = fit_forest_with_oob(x, labels, spec);
  if (!spec.recalibrate) return std::move(fit.learner);
  return recalibrate(fit.learner, fit.oob, labels);
}

FittedLearner fit_propensity(const FeatureMatrix& x, std::span<const int> treatment,
                             const LearnerSpec& spec) {
  return fit_learner(x, treatment, spec);
}

std::vector<double> predict_proba(const FittedLearner& learner, const FeatureMatrix& x) {
  const auto& expected = learner.feature_names();
  std::unordered_map<std::string, std::size_t> given;
  for (std::size_t j = 0; j < x.names.size(); ++j) given.emplace(x.names[j], j);
  std::vector<std::string> missing, extra;
  std::vector<std::size_t> order;
  for (const auto& name : expected) {
    auto it = given.find(name);
    if (it == given.end()) missing.push_back(name);
    else order.push_back(it->second);
  }
  for (const auto& name : x.names)
    if (std::find(expected.begin(), expected.end(), name) == expected.end()) extra.push_back(name);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "feature mismatch;";
    if (!missing.empty()) {
      msg += " missing:";
      for (const auto& m : missing) msg += ' ' + m;
      if (!extra.empty()) msg += ';';
    }
    if (!extra.empty()) {
      msg += " extra:";
      for (const auto& e : extra) msg += ' ' + e;
    }
    throw ValidationError(msg);
  }

  bool identity_order = true;
  for (std::size_t j = 0; j < order.size(); ++j) identity_order &= order[j] == j;
  std::vector<double> raw;
  if (identity_order) {
    raw = learner.predict_raw(x);
  } else {
    FeatureMatrix reordered;
    reordered.names = expected;
    reordered.values.resize(x.values.rows(), static_cast<Eigen::Index>(order.size()));
    for (std::size_t j = 0; j < order.size(); ++j)
      reordered.values.col(static_cast<Eigen::Index>(j)) =
          x.values.col(static_cast<Eigen::Index>(order[j]));
    raw = learner.predict_raw(reordered);
  }
  if (const auto& r = learner.recalibration()) {
    for (double& p : raw) p = expit(r->intercept + r->slope * logit(p));
  }
  for (double& p : raw) p = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.5;
  return raw;
}

}  // namespace cfade
