#pragma once

// End-to-end pipeline stages behind the `cfade` command-line tool. Every
// stage reads only files written by earlier stages, so each can be re-run
// on its own.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfade/evaluation.hpp"
#include "cfade/learners.hpp"
#include "cfade/synth.hpp"

namespace cfade {

struct InputPaths {
  std::filesystem::path cohort;
  std::filesystem::path schema;
  std::filesystem::path assessments;
};

struct NamedLearner {
  /// Used in output file names and table rows; unique per config.
  std::string name;
  LearnerSpec spec;
};

struct RunConfig {
  /// Explicit data inputs; empty paths default to files written by `synth`.
  InputPaths input;
  /// Present in synthetic mode.
  std::optional<DgpConfig> synth;
  std::vector<NamedLearner> learners;
  /// When set, every T-learner trims with a propensity model of this spec;
  /// otherwise each uses a propensity model of its own kind and options.
  std::optional<LearnerSpec> propensity;
  std::size_t replications = 500;
  double level = 0.95;
  double train_fraction = 0.9;
  std::optional<std::uint64_t> split_seed;
  /// Compute the unadjusted ATT row before support trimming.
  bool unadjusted_pre_trim = false;
  std::filesystem::path output_dir = "cfade_out";
  std::uint64_t seed = 0;

  /// Throws ValidationError on out-of-range settings.
  void validate() const;

  /// Parses the JSON config format. Relative input paths resolve against
  /// `base_dir`.
  static RunConfig from_json_text(const std::string& json_text,
                                  const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  std::uint64_t synth_seed() const;
  std::uint64_t effective_split_seed() const;
  std::uint64_t fit_seed() const;
  std::uint64_t bootstrap_seed() const;

  std::filesystem::path cohort_path() const;
  std::filesystem::path schema_path() const;
  std::filesystem::path assessments_path() const;
};

/// Propensity spec used by the T-learner built on `learner`.
LearnerSpec propensity_spec_for(const RunConfig& config, const LearnerSpec& learner);

/// Maps a true probability of causation onto the nearest expert category
/// (used to label synthetic cases).
ExpertCategory synthetic_category(double pc);

/// Files a stage produced, relative to the output directory.
struct StageResult {
  std::vector<std::filesystem::path> files;
};

StageResult cmd_synth(const RunConfig& config);
StageResult cmd_split(const RunConfig& config);
StageResult cmd_fit(const RunConfig& config);
StageResult cmd_estimate(const RunConfig& config);
StageResult cmd_bootstrap(const RunConfig& config);
StageResult cmd_evaluate(const RunConfig& config);
/// All stages in dependency order (synth only in synthetic mode) plus
/// manifest.json, the one file that carries timestamps.
StageResult cmd_run(const RunConfig& config);

}  // namespace cfade
