#include "cfade/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "cfade/error.hpp"
#include "cfade/text_io.hpp"

namespace cfade {

std::string_view to_string(CovariateKind kind) {
  return kind == CovariateKind::kBinary ? "binary" : "continuous";
}

std::string_view to_string(SelectionGroup group) {
  switch (group) {
    case SelectionGroup::kCoreConfounder:
      return "core_confounder";
    case SelectionGroup::kLongitudinalParameter:
      return "longitudinal_parameter";
    case SelectionGroup::kNephrotoxin:
      return "nephrotoxin";
  }
  return "?";
}

CovariateKind parse_covariate_kind(std::string_view token) {
  if (token == "continuous") return CovariateKind::kContinuous;
  if (token == "binary") return CovariateKind::kBinary;
  throw ValidationError("unknown covariate kind '" + std::string(token) + "'");
}

SelectionGroup parse_selection_group(std::string_view token) {
  if (token == "core_confounder") return SelectionGroup::kCoreConfounder;
  if (token == "longitudinal_parameter") return SelectionGroup::kLongitudinalParameter;
  if (token == "nephrotoxin") return SelectionGroup::kNephrotoxin;
  throw ValidationError("unknown selection group '" + std::string(token) + "'");
}

CovariateSchema::CovariateSchema(std::vector<CovariateSpec> covariates)
    : covariates_(std::move(covariates)) {
  std::unordered_set<std::string> seen;
  static const std::unordered_set<std::string> reserved = {"admission_id", "cluster_id",
                                                           "treatment", "outcome"};
  for (const auto& c : covariates_) {
    if (c.name.empty()) throw ValidationError("covariate with empty name");
    if (c.name.find_first_of(", \t") != std::string::npos)
      throw ValidationError("covariate name contains a comma or whitespace: '" + c.name + "'");
    if (reserved.contains(c.name)) throw ValidationError("reserved covariate name: " + c.name);
    if (!seen.insert(c.name).second) throw ValidationError("duplicate covariate name: " + c.name);
  }
}

std::optional<std::size_t> CovariateSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < covariates_.size(); ++i)
    if (covariates_[i].name == name) return i;
  return std::nullopt;
}

std::size_t CovariateSchema::require(std::string_view name) const {
  if (auto idx = index_of(name)) return *idx;
  throw ValidationError("unknown covariate: " + std::string(name));
}

void Cohort::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& a : admissions) {
    if (a.admission_id.empty()) throw ValidationError("admission with empty admission_id");
    if (!ids.insert(a.admission_id).second)
      throw ValidationError("duplicate admission_id: " + a.admission_id);
    if (a.treatment != 0 && a.treatment != 1)
      throw ValidationError("admission " + a.admission_id + ": treatment must be 0 or 1");
    if (a.outcome && *a.outcome != 0 && *a.outcome != 1)
      throw ValidationError("admission " + a.admission_id + ": outcome must be 0 or 1");
    if (a.covariates.size() != schema.size())
      throw ValidationError("admission " + a.admission_id + ": expected " +
                            std::to_string(schema.size()) + " covariates, got " +
                            std::to_string(a.covariates.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& v = a.covariates[j];
      if (!v) continue;
      if (!std::isfinite(*v))
        throw ValidationError("admission " + a.admission_id + ": non-finite value in " +
                              schema[j].name);
      if (schema[j].kind == CovariateKind::kBinary && *v != 0.0 && *v != 1.0)
        throw ValidationError("admission " + a.admission_id + ": non-binary value in " +
                              schema[j].name);
    }
  }
}

Cohort Cohort::subset(std::span<const std::size_t> rows) const {
  Cohort out{schema, {}};
  out.admissions.reserve(rows.size());
  for (std::size_t r : rows) out.admissions.push_back(admissions.at(r));
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EligibilityRule rule) {
  switch (rule) {
    case EligibilityRule::kAdult:
      return "adult";
    case EligibilityRule::kNotDialysisDependent:
      return "not_dialysis_dependent";
    case EligibilityRule::kAkiFreeAtBaseline:
      return "aki_free_at_baseline";
    case EligibilityRule::kInitiationWindow:
      return "initiation_window";
    case EligibilityRule::kNoTreatmentSwitch:
      return "no_treatment_switch";
  }
  return "?";
}

std::optional<EligibilityRule> first_failing_rule(const RawAdmissionRecord& r) {
  if (!(r.age_years >= kMinAgeYears)) return EligibilityRule::kAdult;
  if (r.dialysis_dependent_at_admission) return EligibilityRule::kNotDialysisDependent;
  if (r.aki_at_baseline) return EligibilityRule::kAkiFreeAtBaseline;
  // Both window boundaries are themselves eligible.
  if (r.treatment_initiation_hour < kEarliestInitiationHour ||
      r.treatment_initiation_hour > kLatestInitiationHour)
    return EligibilityRule::kInitiationWindow;
  if (r.other_option_initiated_after) return EligibilityRule::kNoTreatmentSwitch;
  return std::nullopt;
}

EligibilityResult apply_eligibility(const CovariateSchema& schema,
                                    std::span<const RawAdmissionRecord> records) {
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    const auto& id = r.admission.admission_id;
    if (!ids.insert(id).second) throw ValidationError("duplicate admission_id: " + id);
    if (!(r.age_years > 0.0)) throw ValidationError("admission " + id + ": age_years must be > 0");
    if (!(r.treatment_initiation_hour >= 0.0))
      throw ValidationError("admission " + id + ": treatment_initiation_hour must be >= 0");
  }

  EligibilityResult result{Cohort{schema, {}}, {}};
  for (const auto& r : records) {
    if (auto rule = first_failing_rule(r)) {
      result.excluded.push_back({r.admission.admission_id, *rule});
    } else {
      result.cohort.admissions.push_back(r.admission);
    }
  }
  result.cohort.validate();
  return result;
}

std::string format_exclusion_log(std::span<const Exclusion> excluded) {
  std::string out = "admission_id,rule\n";
  for (const auto& e : excluded) {
    out += e.admission_id;
    out += ',';
    out += to_string(e.rule);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SummaryTable cohort_summary(const Cohort& cohort) {
  SummaryTable table;
  for (const auto& a : cohort.admissions) ++table.arm_size[a.treatment == 1 ? 1 : 0];
  if (table.arm_size[0] == 0) throw ValidationError("cohort summary: alternative arm is empty");
  if (table.arm_size[1] == 0) throw ValidationError("cohort summary: vancomycin arm is empty");

  for (std::size_t j = 0; j < cohort.schema.size(); ++j) {
    SummaryRow row;
    row.covariate = cohort.schema[j].name;
    row.kind = cohort.schema[j].kind;
    std::vector<double> values[2];
    for (const auto& a : cohort.admissions)
      if (a.covariates[j]) values[a.treatment == 1 ? 1 : 0].push_back(*a.covariates[j]);
    for (int arm = 0; arm < 2; ++arm) {
      auto& v = values[arm];
      if (row.kind == CovariateKind::kBinary) {
        auto& s = row.binary[arm];
        s.n_observed = v.size();
        s.count = static_cast<std::size_t>(std::count(v.begin(), v.end(), 1.0));
        s.percent = 100.0 * static_cast<double>(s.count) / static_cast<double>(table.arm_size[arm]);
      } else {
        auto& s = row.continuous[arm];
        s.n_observed = v.size();
        if (v.empty()) {
          s.median = s.q1 = s.q3 = std::nan("");
          continue;
        }
        std::sort(v.begin(), v.end());
        s.median = quantile_sorted(v, 0.5);
        s.q1 = quantile_sorted(v, 0.25);
        s.q3 = quantile_sorted(v, 0.75);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string SummaryTable::to_csv() const {
  std::ostringstream out;
  out << "characteristic,alternative (n = " << arm_size[0] << "),vancomycin (n = " << arm_size[1]
      << ")\n";
  for (const auto& row : rows) {
    if (row.kind == CovariateKind::kBinary) {
      out << row.covariate << " No. (%)";
      for (const auto& s : row.binary)
        out << ',' << s.count << " (" << text::format_fixed(s.percent, 1) << ')';
    } else {
      out << row.covariate << " median (Q1 - Q3)";
      for (const auto& s : row.continuous)
        out << ',' << text::format_fixed(s.median, 1) << " (" << text::format_fixed(s.q1, 1)
            << " - " << text::format_fixed(s.q3, 1) << ')';
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

CovariateSchema read_schema(const std::filesystem::path& path) {
  std::vector<CovariateSpec> specs;
  const auto lines = text::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.empty() || line.front() == '#') continue;
    if (line.starts_with("name,")) continue;
    auto f = text::split_fields(line);
    if (f.size() < 3 || f.size() > 4)
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) +
                            ": expected name,kind,selection_group,unit");
    CovariateSpec spec;
    spec.name = f[0];
    try {
      spec.kind = parse_covariate_kind(f[1]);
      spec.group = parse_selection_group(f[2]);
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (f.size() == 4) spec.unit = f[3];
    specs.push_back(std::move(spec));
  }
  return CovariateSchema(std::move(specs));
}

std::string format_schema(const CovariateSchema& schema) {
  std::string out = "name,kind,selection_group,unit\n";
  for (const auto& c : schema.covariates()) {
    out += c.name + ',' + std::string(to_string(c.kind)) + ',' + std::string(to_string(c.group)) +
           ',' + c.unit + '\n';
  }
  return out;
}

void write_schema(const CovariateSchema& schema, const std::filesystem::path& path) {
  text::write_file(path, format_schema(schema));
}

namespace {

constexpr std::size_t kFixedColumns = 4;

[[noreturn]] void cell_error(std::string_view source, std::size_t row, std::string_view column,
                             const std::string& what) {
  throw ValidationError(std::string(source) + ": row " + std::to_string(row) + ", column '" +
                        std::string(column) + "': " + what);
}

int parse_binary_cell(const std::string& cell, std::string_view source, std::size_t row,
                      std::string_view column) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  cell_error(source, row, column, "expected 0 or 1, got '" + cell + "'");
}

}  // namespace

Cohort parse_cohort(const std::vector<std::string>& lines, const CovariateSchema& schema,
                    std::string_view source) {
  if (lines.empty()) throw ValidationError(std::string(source) + ": empty cohort file");
  const auto header = text::split_fields(lines.front());
  static const char* kFixed[kFixedColumns] = {"admission_id", "cluster_id", "treatment", "outcome"};
  if (header.size() < kFixedColumns)
    throw ValidationError(std::string(source) + ": header too short");
  for (std::size_t c = 0; c < kFixedColumns; ++c)
    if (header[c] != kFixed[c])
      throw ValidationError(std::string(source) + ": header column " + std::to_string(c + 1) +
                            " must be '" + kFixed[c] + "', got '" + header[c] + "'");

  // Map file columns onto schema positions; order in the file is free.
  std::vector<std::size_t> column_to_schema;
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t c = kFixedColumns; c < header.size(); ++c) {
    const auto idx = schema.index_of(header[c]);
    if (!idx) throw ValidationError(std::string(source) + ": unknown column '" + header[c] + "'");
    if (seen[*idx])
      throw ValidationError(std::string(source) + ": duplicate column '" + header[c] + "'");
    seen[*idx] = true;
    column_to_schema.push_back(*idx);
  }
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (!seen[j])
      throw ValidationError(std::string(source) + ": missing column '" + schema[j].name + "'");

  Cohort cohort{schema, {}};
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t row = i + 1;  // 1-based file line
    auto f = text::split_fields(lines[i]);
    if (f.size() != header.size())
      throw ValidationError(std::string(source) + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
    Admission a;
    a.admission_id = f[0];
    a.cluster_id = f[1];
    if (a.admission_id.empty()) cell_error(source, row, "admission_id", "empty id");
    a.treatment = parse_binary_cell(f[2], source, row, "treatment");
    if (!f[3].empty()) a.outcome = parse_binary_cell(f[3], source, row, "outcome");
    a.covariates.assign(schema.size(), std::nullopt);
    for (std::size_t c = kFixedColumns; c < f.size(); ++c) {
      const std::size_t j = column_to_schema[c - kFixedColumns];
      const auto& cell = f[c];
      if (cell.empty()) continue;
      if (schema[j].kind == CovariateKind::kBinary) {
        a.covariates[j] = parse_binary_cell(cell, source, row, schema[j].name);
      } else {
        const auto v = text::parse_double(cell);
        if (!v || !std::isfinite(*v))
          cell_error(source, row, schema[j].name, "malformed number '" + cell + "'");
        a.covariates[j] = *v;
      }
    }
    cohort.admissions.push_back(std::move(a));
  }
  cohort.validate();
  return cohort;
}

Cohort read_cohort(const std::filesystem::path& path, const CovariateSchema& schema) {
  return parse_cohort(text::read_lines(path), schema, path.string());
}

Cohort read_cohort(const std::filesystem::path& path, const std::filesystem::path& schema_path) {
  return read_cohort(path, read_schema(schema_path));
}

std::string format_cohort(const Cohort& cohort) {
  std::string out = "admission_id,cluster_id,treatment,outcome";
  for (const auto& c : cohort.schema.covariates()) out += ',' + c.name;
  out += '\n';
  for (const auto& a : cohort.admissions) {
    out += a.admission_id + ',' + a.cluster_id + ',' + std::to_string(a.treatment) + ',';
    if (a.outcome) out += std::to_string(*a.outcome);
    for (const auto& v : a.covariates) {
      out += ',';
      if (v) out += text::format_double(*v);
    }
    out += '\n';
  }
  return out;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  text::write_file(path, format_cohort(cohort));
}

}  // namespace cfade
