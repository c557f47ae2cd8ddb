#include "cfade/synth.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cfade/error.hpp"
#include "cfade/learners.hpp"
#include "cfade/rng.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

std::string_view to_string(Coupling coupling) {
  return coupling == Coupling::kMonotone ? "monotone" : "independent";
}

Coupling parse_coupling(std::string_view token) {
  if (token == "monotone") return Coupling::kMonotone;
  if (token == "independent") return Coupling::kIndependent;
  throw ValidationError("unknown coupling '" + std::string(token) + "'");
}

void DgpConfig::validate() const {
  if (n_admissions == 0) throw ValidationError("n_admissions must be positive");
  if (n_clusters == 0) throw ValidationError("n_clusters must be positive");
  if (n_clusters > n_admissions) throw ValidationError("n_clusters must not exceed n_admissions");
  const std::size_t want = n_features() + 1;
  auto check = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != want)
      throw ValidationError(std::string(what) + " needs " + std::to_string(want) +
                            " entries (intercept + features), got " + std::to_string(v.size()));
    for (double c : v)
      if (!std::isfinite(c)) throw ValidationError(std::string(what) + " contains a non-finite value");
  };
  check(propensity_coefficients, "propensity_coefficients");
  check(baseline_coefficients, "baseline_coefficients");
  check(effect_coefficients, "effect_coefficients");
  if (!(missingness_rate >= 0.0 && missingness_rate < 1.0))
    throw ValidationError("missingness_rate must lie in [0, 1)");
  const std::size_t n_binary = n_binary_confounders + n_nephrotoxins;
  if (!binary_prevalences.empty()) {
    if (binary_prevalences.size() != n_binary)
      throw ValidationError("binary_prevalences needs one entry per binary feature");
    for (double p : binary_prevalences)
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binary prevalence outside [0, 1]");
  }
  if (!(cluster_intercept_sd >= 0.0)) throw ValidationError("cluster_intercept_sd must be >= 0");
}

CovariateSchema synthetic_schema(const DgpConfig& config) {
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < config.n_continuous; ++j)
    specs.push_back({"x" + std::to_string(j + 1), CovariateKind::kContinuous,
                     j == 0 ? SelectionGroup::kCoreConfounder : SelectionGroup::kLongitudinalParameter,
                     "sd"});
  for (std::size_t j = 0; j < config.n_binary_confounders; ++j)
    specs.push_back({"b" + std::to_string(j + 1), CovariateKind::kBinary,
                     SelectionGroup::kCoreConfounder, ""});
  for (std::size_t j = 0; j < config.n_nephrotoxins; ++j)
    specs.push_back({"n" + std::to_string(j + 1), CovariateKind::kBinary,
                     SelectionGroup::kNephrotoxin, ""});
  return CovariateSchema(std::move(specs));
}

DgpConfig default_dgp_config(std::size_t n_admissions, std::uint64_t seed, Coupling coupling) {
  DgpConfig c;
  c.n_admissions = n_admissions;
  c.n_clusters = std::min<std::size_t>(15, n_admissions);
  c.n_continuous = 3;
  c.n_binary_confounders = 2;
  c.n_nephrotoxins = 2;
  //                         int    x1    x2    x3    b1    b2    n1    n2
  c.propensity_coefficients = {-0.4, 0.6, -0.4, 0.0, 0.5, 0.0, 0.4, 0.0};
  c.baseline_coefficients = {-1.8, 0.5, 0.3, 0.0, 0.4, 0.3, 0.5, 0.0};
  c.effect_coefficients = {0.3, 0.0, 0.0, 0.0, 0.4, 0.0, 0.5, 0.0};
  c.coupling = coupling;
  c.seed = seed;
  return c;
}

Cohort SyntheticCohort::cohort() const {
  Cohort c{schema, {}};
  c.admissions.reserve(admissions.size());
  for (const auto& s : admissions) c.admissions.push_back(s.admission);
  return c;
}

std::vector<MuPair> SyntheticCohort::oracle_mu() const {
  std::vector<MuPair> mu;
  mu.reserve(admissions.size());
  for (const auto& s : admissions) mu.push_back({s.p0, s.p1});
  return mu;
}

namespace {

// Stream indices reserved for cohort-level draws; per-admission streams use
// the admission index directly.
constexpr std::uint64_t kPrevalenceStream = 0xfffffffffff00001ULL;
constexpr std::uint64_t kClusterStream = 0xfffffffffff00002ULL;

std::string padded(const char* prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

std::size_t digits_for(std::size_t n) { return std::to_string(n).size(); }

}  // namespace

SyntheticCohort generate_cohort(const DgpConfig& config) {
  config.validate();
  const std::size_t n = config.n_admissions;
  const std::size_t p = config.n_features();
  const std::size_t n_binary = config.n_binary_confounders + config.n_nephrotoxins;

  std::vector<double> prevalence = config.binary_prevalences;
  if (prevalence.empty()) {
    Rng rng = make_rng(config.seed, kPrevalenceStream);
    for (std::size_t j = 0; j < n_binary; ++j) prevalence.push_back(0.05 + 0.45 * uniform01(rng));
  }

  // Cluster labels: round-robin, then shuffled.
  std::vector<std::size_t> cluster_of(n);
  std::vector<double> cluster_shift(config.n_clusters, 0.0);
  {
    Rng rng = make_rng(config.seed, kClusterStream);
    for (std::size_t i = 0; i < n; ++i) cluster_of[i] = i % config.n_clusters;
    for (std::size_t i = n; i > 1; --i) std::swap(cluster_of[i - 1], cluster_of[uniform_index(rng, i)]);
    if (config.cluster_intercept_sd > 0.0)
      for (auto& s : cluster_shift) s = config.cluster_intercept_sd * standard_normal(rng);
  }

  SyntheticCohort out{synthetic_schema(config), {}};
  out.admissions.resize(n);
  const std::size_t id_width = digits_for(n);
  const std::size_t cluster_width = std::max<std::size_t>(2, digits_for(config.n_clusters));
  std::vector<double> x(p);

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(config.seed, i);
    for (std::size_t j = 0; j < config.n_continuous; ++j) x[j] = standard_normal(rng);
    for (std::size_t j = 0; j < n_binary; ++j)
      x[config.n_continuous + j] = uniform01(rng) < prevalence[j] ? 1.0 : 0.0;

    auto linear = [&](const std::vector<double>& beta) {
      double eta = beta[0];
      for (std::size_t j = 0; j < p; ++j) eta += beta[j + 1] * x[j];
      return eta;
    };
    const double eta_prop = linear(config.propensity_coefficients);
    const double eta_base = linear(config.baseline_coefficients) + cluster_shift[cluster_of[i]];
    const double eta_eff = linear(config.effect_coefficients);

    auto& s = out.admissions[i];
    s.coupling = config.coupling;
    s.true_propensity = expit(eta_prop);
    s.p0 = expit(eta_base);
    s.p1 = expit(eta_base + eta_eff);
    if (config.coupling == Coupling::kMonotone && eta_eff < 0.0)
      throw ValidationError("monotone coupling requires a non-negative treatment effect, but admission " +
                            std::to_string(i) + " has effect log-odds " + text::format_double(eta_eff));
    const double u_treat = uniform01(rng);
    const double u0 = uniform01(rng);
    const double u1 = config.coupling == Coupling::kMonotone ? u0 : uniform01(rng);
    s.y0 = u0 < s.p0 ? 1 : 0;
    s.y1 = u1 < s.p1 ? 1 : 0;

    auto& a = s.admission;
    a.admission_id = padded("adm", i + 1, id_width);
    a.cluster_id = padded("icu", cluster_of[i] + 1, cluster_width);
    a.treatment = u_treat < s.true_propensity ? 1 : 0;
    a.outcome = a.treatment == 1 ? s.y1 : s.y0;
    a.covariates.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      const bool drop = config.missingness_rate > 0.0 && uniform01(rng) < config.missingness_rate;
      a.covariates[j] = drop ? std::nullopt : std::optional<double>(x[j]);
    }
  }
  return out;
}

double true_pc(const SyntheticAdmission& s) {
  if (s.admission.treatment != 1 || s.admission.outcome != 1)
    throw ValidationError("true_pc is defined only for treated admissions with the outcome (" +
                          s.admission.admission_id + ")");
  if (s.coupling == Coupling::kMonotone) return (s.p1 - s.p0) / s.p1;
  return 1.0 - s.p0;
}

EffectEstimate true_att(std::span<const SyntheticAdmission> admissions) {
  std::vector<MuPair> treated;
  for (const auto& s : admissions)
    if (s.admission.treatment == 1) treated.push_back({s.p0, s.p1});
  if (treated.empty()) throw ValidationError("true_att: no treated admissions");
  return average_effect(treated);
}

std::string format_oracle(std::span<const SyntheticAdmission> admissions) {
  std::string out = "admission_id,p0,p1,y0,y1,true_propensity\n";
  for (const auto& s : admissions) {
    out += s.admission.admission_id + ',' + text::format_double(s.p0) + ',' +
           text::format_double(s.p1) + ',' + std::to_string(s.y0) + ',' + std::to_string(s.y1) +
           ',' + text::format_double(s.true_propensity) + '\n';
  }
  return out;
}

void write_oracle(std::span<const SyntheticAdmission> admissions, const std::filesystem::path& path) {
  text::write_file(path, format_oracle(admissions));
}

SyntheticCohort read_synthetic(const Cohort& cohort, const std::filesystem::path& oracle_path,
                               Coupling coupling) {
  const auto lines = text::read_lines(oracle_path);
  if (lines.empty() || lines.front() != "admission_id,p0,p1,y0,y1,true_propensity")
    throw ValidationError(oracle_path.string() + ": unexpected oracle header");
  std::unordered_map<std::string, SyntheticAdmission> by_id;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = text::split_fields(lines[i]);
    auto num = [&](std::size_t k) {
      const auto v = f.size() == 6 ? text::parse_double(f[k]) : std::nullopt;
      if (!v) throw ValidationError(oracle_path.string() + ": malformed row " + std::to_string(i + 1));
      return *v;
    };
    SyntheticAdmission s;
    s.p0 = num(1);
    s.p1 = num(2);
    s.y0 = static_cast<int>(num(3));
    s.y1 = static_cast<int>(num(4));
    s.true_propensity = num(5);
    s.coupling = coupling;
    by_id.emplace(f[0], s);
  }
  SyntheticCohort out{cohort.schema, {}};
  for (const auto& a : cohort.admissions) {
    auto it = by_id.find(a.admission_id);
    if (it == by_id.end()) throw ValidationError("oracle has no row for admission " + a.admission_id);
    SyntheticAdmission s = it->second;
    s.admission = a;
    out.admissions.push_back(std::move(s));
  }
  return out;
}

}  // namespace cfade
