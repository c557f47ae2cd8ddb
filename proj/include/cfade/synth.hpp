#pragma once

// Synthetic cohorts with both potential outcomes materialized. The true
// conditional risks serve as the oracle for PC, ATT, and the lower-bound
// property of the excess risk ratio.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfade/cohort.hpp"
#include "cfade/effect.hpp"

namespace cfade {

/// How the two potential outcomes share randomness.
///  kMonotone: one uniform U, y0 = 1{U < p0}, y1 = 1{U < p1}; with p1 >= p0
///             this guarantees y1 >= y0.
///  kIndependent: separate uniforms; treatment can also prevent events.
enum class Coupling { kMonotone, kIndependent };

std::string_view to_string(Coupling coupling);
Coupling parse_coupling(std::string_view token);

/// Feature layout: [continuous..., binary confounders..., nephrotoxins...].
/// Coefficient vectors are intercept-first with one entry per feature.
struct DgpConfig {
  std::size_t n_admissions = 1000;
  std::size_t n_clusters = 15;
  std::size_t n_continuous = 2;
  std::size_t n_binary_confounders = 1;
  std::size_t n_nephrotoxins = 1;
  std::vector<double> propensity_coefficients;
  std::vector<double> baseline_coefficients;
  std::vector<double> effect_coefficients;
  Coupling coupling = Coupling::kMonotone;
  double missingness_rate = 0.0;
  /// Optional fixed prevalences for the binary features (confounders then
  /// nephrotoxins). Empty = drawn once from Uniform(0.05, 0.5).
  std::vector<double> binary_prevalences;
  /// Standard deviation of a per-cluster shift on the baseline log-odds.
  double cluster_intercept_sd = 0.0;
  std::uint64_t seed = 0;

  std::size_t n_features() const { return n_continuous + n_binary_confounders + n_nephrotoxins; }

  /// Throws ValidationError on size mismatches or out-of-range settings.
  void validate() const;
};

/// Feature names used by generated cohorts: x1.., b1.., n1...
CovariateSchema synthetic_schema(const DgpConfig& config);

/// A sensible default: 3 continuous, 2 binary confounders, 2 nephrotoxins,
/// confounded assignment and a positive treatment effect.
DgpConfig default_dgp_config(std::size_t n_admissions, std::uint64_t seed,
                             Coupling coupling = Coupling::kMonotone);

struct SyntheticAdmission {
  Admission admission;
  double p0 = 0.0;
  double p1 = 0.0;
  int y0 = 0;
  int y1 = 0;
  double true_propensity = 0.0;
  Coupling coupling = Coupling::kMonotone;
};

struct SyntheticCohort {
  CovariateSchema schema;
  std::vector<SyntheticAdmission> admissions;

  Cohort cohort() const;
  std::vector<MuPair> oracle_mu() const;
};

/// Deterministic given config.seed; admission i draws from the stream
/// (seed, i). Throws ValidationError when monotone coupling is requested but
/// some admission would have p1 < p0.
SyntheticCohort generate_cohort(const DgpConfig& config);

/// Probability of causation P(Y^0 = 0 | Y^1 = 1, X) under the admission's
/// coupling: (p1 - p0) / p1 for monotone, 1 - p0 for independent.
/// Throws ValidationError unless treatment == 1 and outcome == 1.
double true_pc(const SyntheticAdmission& admission);

/// Mean p0 and p1 over treated admissions. Throws ValidationError when
/// there is none.
EffectEstimate true_att(std::span<const SyntheticAdmission> admissions);

/// admission_id,p0,p1,y0,y1,true_propensity
std::string format_oracle(std::span<const SyntheticAdmission> admissions);
void write_oracle(std::span<const SyntheticAdmission> admissions, const std::filesystem::path& path);

/// Reads an oracle sidecar and joins it to a cohort by admission_id.
SyntheticCohort read_synthetic(const Cohort& cohort, const std::filesystem::path& oracle_path,
                               Coupling coupling);

}  // namespace cfade
