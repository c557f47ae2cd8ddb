#include "cfade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cfade/error.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

std::string_view to_string(ExpertCategory category) {
  switch (category) {
    case ExpertCategory::kUnassessable:
      return "unassessable";
    case ExpertCategory::kUnlikely:
      return "unlikely";
    case ExpertCategory::kPossible:
      return "possible";
    case ExpertCategory::kProbable:
      return "probable";
    case ExpertCategory::kNearlyCertain:
      return "nearly_certain";
  }
  return "?";
}

ExpertCategory parse_expert_category(std::string_view token) {
  if (token == "unassessable") return ExpertCategory::kUnassessable;
  if (token == "unlikely") return ExpertCategory::kUnlikely;
  if (token == "possible") return ExpertCategory::kPossible;
  if (token == "probable") return ExpertCategory::kProbable;
  if (token == "nearly_certain") return ExpertCategory::kNearlyCertain;
  throw ValidationError("unknown assessment category '" + std::string(token) + "'");
}

double map_expert_label(ExpertCategory category) {
  switch (category) {
    case ExpertCategory::kUnassessable:
      return 0.5;
    case ExpertCategory::kUnlikely:
      return 0.25;
    case ExpertCategory::kPossible:
      return 0.5;
    case ExpertCategory::kProbable:
      return 0.75;
    case ExpertCategory::kNearlyCertain:
      return 0.9;
  }
  throw ValidationError("invalid assessment category");
}

int dichotomize_label(ExpertCategory category) {
  return category == ExpertCategory::kUnlikely ? 0 : 1;
}

std::vector<ExpertAssessment> read_assessments(const std::filesystem::path& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty() || lines.front() != "admission_id,category")
    throw ValidationError(path.string() + ": header must be 'admission_id,category'");
  std::vector<ExpertAssessment> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = text::split_fields(lines[i]);
    if (f.size() != 2)
      throw ValidationError(path.string() + ": row " + std::to_string(i + 1) + ": expected 2 fields");
    ExpertCategory c;
    try {
      c = parse_expert_category(f[1]);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": row " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!seen.insert(f[0]).second)
      throw ValidationError(path.string() + ": duplicate assessment for " + f[0]);
    out.push_back({f[0], c});
  }
  return out;
}

std::string format_assessments(std::span<const ExpertAssessment> assessments) {
  std::string out = "admission_id,category\n";
  for (const auto& a : assessments) out += a.admission_id + ',' + std::string(to_string(a.category)) + '\n';
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  // Rank-sum with midranks for ties, equivalent to pairwise counting.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0.0, n_neg = 0.0, rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        n_pos += 1.0;
        rank_sum_pos += midrank;
      } else {
        n_neg += 1.0;
      }
    }
    i = j;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw ValidationError("auc requires both classes");
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::optional<double> ppv(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ValidationError("ppv: scores and labels differ in length");
  double predicted = 0.0, hits = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) {
      predicted += 1.0;
      hits += labels[i] == 1;
    }
  }
  if (predicted == 0.0) return std::nullopt;
  return hits / predicted;
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ValidationError("mse: inputs differ in length");
  if (predictions.empty()) throw ValidationError("mse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson: inputs differ in length");
  if (x.size() < 2) throw ValidationError("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

FactualAuc evaluate_factual(const TLearnerModel& model, const Cohort& test) {
  const Cohort cohort = with_outcomes(test);
  const auto pred = predict_mu(model, cohort);
  FactualAuc out;
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (cohort.admissions[i].treatment != arm) continue;
      s.push_back(arm == 1 ? pred[i].mu.mu1 : pred[i].mu.mu0);
      y.push_back(*cohort.admissions[i].outcome);
    }
    const bool both = std::find(y.begin(), y.end(), 0) != y.end() && std::find(y.begin(), y.end(), 1) != y.end();
    if (!both) continue;
    (arm == 1 ? out.treated : out.control) = auc(s, y);
  }
  return out;
}

AgreementReport evaluate_counterfactual(std::span<const CaseEstimate> cases,
                                        std::span<const ExpertAssessment> assessments) {
  std::unordered_map<std::string, ExpertCategory> by_id;
  for (const auto& a : assessments) by_id.emplace(a.admission_id, a.category);
  std::vector<std::string> missing;
  for (const auto& c : cases)
    if (!by_id.contains(c.admission_id)) missing.push_back(c.admission_id);
  if (!missing.empty()) {
    std::string msg = "no assessment for case(s):";
    for (const auto& m : missing) msg += ' ' + m;
    throw ValidationError(msg);
  }

  AgreementReport report;
  std::vector<double> pc, mapped;
  std::vector<int> labels;
  for (const auto& c : cases) {
    if (!c.pc_low) continue;
    const auto category = by_id.at(c.admission_id);
    AgreementCase row{c.admission_id, *c.pc_low, map_expert_label(category), dichotomize_label(category)};
    pc.push_back(row.pc_low);
    mapped.push_back(row.mapped_probability);
    labels.push_back(row.dichotomized);
    report.cases.push_back(std::move(row));
  }
  report.n_cases = report.cases.size();
  if (report.n_cases == 0) throw EstimationError("no scored cases to evaluate");
  report.mse = mse(pc, mapped);
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) report.auc = auc(pc, labels);
  report.ppv = ppv(pc, labels, 0.5);
  return report;
}

namespace {

std::size_t bin_of(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return std::min(static_cast<std::size_t>(clamped * kHistogramBins), kHistogramBins - 1);
}

}  // namespace

Histogram propensity_histogram(std::span<const double> scores, std::span<const int> treatment) {
  if (scores.size() != treatment.size()) throw ValidationError("histogram: inputs differ in length");
  Histogram h;
  for (std::size_t i = 0; i < scores.size(); ++i) ++h.counts[treatment[i] == 1 ? 1 : 0][bin_of(scores[i])];
  return h;
}

std::array<std::size_t, kHistogramBins> histogram_counts(std::span<const double> values) {
  std::array<std::size_t, kHistogramBins> counts{};
  for (double v : values) ++counts[bin_of(v)];
  return counts;
}

std::string Histogram::to_csv() const {
  std::ostringstream out;
  out << "bin_lower,bin_upper,alternative,vancomycin\n";
  for (std::size_t b = 0; b < kHistogramBins; ++b)
    out << text::format_fixed(bin_lower(b), 2) << ',' << text::format_fixed(bin_lower(b + 1), 2) << ','
        << counts[0][b] << ',' << counts[1][b] << '\n';
  return out.str();
}

}  // namespace cfade
