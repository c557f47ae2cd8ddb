#pragma once

// Cluster bootstrap with percentile confidence intervals.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfade/cohort.hpp"

namespace cfade {

/// Interpolated empirical quantiles at (1 - level)/2 and 1 - (1 - level)/2.
/// Throws ValidationError with fewer than two values or level outside [0, 1).
std::pair<double, double> percentile_ci(std::span<const double> values, double level);

/// One resample: all admissions of k clusters drawn with replacement from the
/// k distinct clusters. Admissions of a cluster drawn for the d-th time get
/// the id "<original>#<d>" (d >= 2) so ids stay unique.
Cohort resample_clusters(const Cohort& cohort, std::uint64_t seed);

/// Original admission id of a resampled admission.
std::string source_admission_id(const std::string& resampled_id);

struct BootstrapOptions {
  std::size_t replications = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  /// More failed replications than this fraction is an error.
  double max_failed_fraction = 0.2;
};

struct BootstrapResult {
  double point_estimate = 0.0;
  /// Completed replications in replication-index order.
  std::vector<double> replicates;
  std::vector<std::size_t> replicate_index;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t n_failed = 0;
  std::vector<std::string> failure_reasons;
};

using ScalarEstimator = std::function<double(const Cohort&)>;
using VectorEstimator = std::function<std::vector<double>(const Cohort&)>;

/// Runs `estimator` on the full cohort (the point estimate) and on
/// `replications` cluster resamples. Replication r uses the seed
/// derive_seed(options.seed, r), so results do not depend on scheduling.
/// Replications that throw are counted in n_failed; more than
/// max_failed_fraction failures raise EstimationError.
BootstrapResult cluster_bootstrap(const Cohort& cohort, const ScalarEstimator& estimator,
                                  const BootstrapOptions& options);

/// Multi-output variant: one BootstrapResult per output. A replication that
/// throws fails every output; a NaN output fails only that output.
std::vector<BootstrapResult> cluster_bootstrap(const Cohort& cohort,
                                               const VectorEstimator& estimator,
                                               const BootstrapOptions& options);

/// "replication,value" lines for audit.
std::string format_replicates(const BootstrapResult& result);
void write_replicates(const BootstrapResult& result, const std::filesystem::path& path);

}  // namespace cfade
