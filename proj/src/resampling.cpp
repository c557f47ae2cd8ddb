#include "cfade/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "cfade/cohort.hpp"
#include "cfade/error.hpp"
#include "cfade/parallel.hpp"
#include "cfade/rng.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

std::pair<double, double> percentile_ci(std::span<const double> values, double level) {
  if (values.size() < 2) throw ValidationError("percentile interval needs at least two values");
  if (!(level >= 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in [0, 1)");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted)
    if (!std::isfinite(v)) throw ValidationError("percentile interval of non-finite values");
  std::sort(sorted.begin(), sorted.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail)};
}

Cohort resample_clusters(const Cohort& cohort, std::uint64_t seed) {
  // Distinct clusters in order of first appearance.
  std::vector<std::string> clusters;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& c = cohort.admissions[i].cluster_id;
    auto [it, inserted] = members.try_emplace(c);
    if (inserted) clusters.push_back(c);
    it->second.push_back(i);
  }
  Rng rng(seed);
  Cohort out{cohort.schema, {}};
  out.admissions.reserve(cohort.size());
  std::map<std::string, int> times_drawn;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[uniform_index(rng, clusters.size())];
    const int d = ++times_drawn[c];
    for (std::size_t i : members[c]) {
      Admission a = cohort.admissions[i];
      if (d > 1) a.admission_id += "#" + std::to_string(d);
      out.admissions.push_back(std::move(a));
    }
  }
  return out;
}

std::string source_admission_id(const std::string& resampled_id) {
  const auto pos = resampled_id.rfind('#');
  return pos == std::string::npos ? resampled_id : resampled_id.substr(0, pos);
}

std::vector<BootstrapResult> cluster_bootstrap(const Cohort& cohort,
                                               const VectorEstimator& estimator,
                                               const BootstrapOptions& options) {
  if (options.replications == 0) throw ValidationError("replications must be >= 1");
  if (!(options.level >= 0.0 && options.level < 1.0))
    throw ValidationError("confidence level must lie in [0, 1)");
  if (cohort.empty()) throw ValidationError("cluster bootstrap on an empty cohort");

  const std::vector<double> point = estimator(cohort);
  const std::size_t k = point.size();

  struct Outcome {
    std::optional<std::vector<double>> values;
    std::string error;
  };
  std::vector<Outcome> runs(options.replications);
  parallel_for(options.replications, [&](std::size_t r) {
    try {
      const Cohort sample = resample_clusters(cohort, derive_seed(options.seed, r));
      auto v = estimator(sample);
      if (v.size() != k) throw ValidationError("estimator returned a different number of outputs");
      runs[r].values = std::move(v);
    } catch (const std::exception& e) {
      runs[r].error = e.what();
    }
  });

  std::vector<BootstrapResult> results(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& res = results[j];
    res.point_estimate = point[j];
    for (std::size_t r = 0; r < runs.size(); ++r) {
      if (!runs[r].values) {
        ++res.n_failed;
        res.failure_reasons.push_back("replication " + std::to_string(r) + ": " + runs[r].error);
      } else if (!std::isfinite((*runs[r].values)[j])) {
        ++res.n_failed;
        res.failure_reasons.push_back("replication " + std::to_string(r) + ": undefined value");
      } else {
        res.replicates.push_back((*runs[r].values)[j]);
        res.replicate_index.push_back(r);
      }
    }
    if (res.replicates.size() >= 2) {
      std::tie(res.ci_lower, res.ci_upper) = percentile_ci(res.replicates, options.level);
    } else if (res.replicates.size() == 1) {
      res.ci_lower = res.ci_upper = res.replicates.front();
    } else {
      res.ci_lower = res.ci_upper = std::nan("");
    }
  }
  std::size_t hard_failures = 0;
  for (const auto& r : runs) hard_failures += !r.values;
  if (static_cast<double>(hard_failures) >
      options.max_failed_fraction * static_cast<double>(options.replications)) {
    std::string first;
    for (const auto& r : runs)
      if (!r.values) {
        first = r.error;
        break;
      }
    throw EstimationError("cluster bootstrap unstable: " + std::to_string(hard_failures) + " of " +
                          std::to_string(options.replications) +
                          " replications failed (first: " + first + ")");
  }
  return results;
}

BootstrapResult cluster_bootstrap(const Cohort& cohort, const ScalarEstimator& estimator,
                                  const BootstrapOptions& options) {
  auto results = cluster_bootstrap(
      cohort, [&](const Cohort& c) { return std::vector<double>{estimator(c)}; }, options);
  auto& res = results.front();
  if (static_cast<double>(res.n_failed) > options.max_failed_fraction * static_cast<double>(options.replications))
    throw EstimationError("cluster bootstrap unstable: " + std::to_string(res.n_failed) + " of " +
                          std::to_string(options.replications) + " replications failed");
  return std::move(res);
}

std::string format_replicates(const BootstrapResult& result) {
  std::string out = "replication,value\n";
  for (std::size_t i = 0; i < result.replicates.size(); ++i)
    out += std::to_string(result.replicate_index[i]) + ',' + text::format_double(result.replicates[i]) + '\n';
  return out;
}

void write_replicates(const BootstrapResult& result, const std::filesystem::path& path) {
  text::write_file(path, format_replicates(result));
}

}  // namespace cfade
