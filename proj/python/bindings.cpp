#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "cfade/error.hpp"
#include "cfade/estimators.hpp"
#include "cfade/evaluation.hpp"
#include "cfade/pipeline.hpp"
#include "cfade/resampling.hpp"
#include "cfade/synth.hpp"

namespace py = pybind11;
using namespace cfade;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

// Covariates as an (n, p) float array with NaN for missing values.
py::array_t<double> covariate_array(const Cohort& c) {
  const auto n = static_cast<py::ssize_t>(c.size());
  const auto p = static_cast<py::ssize_t>(c.schema.size());
  py::array_t<double> out({n, p});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i)
    for (py::ssize_t j = 0; j < p; ++j) {
      const auto& v = c.admissions[i].covariates[j];
      view(i, j) = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
  return out;
}

LearnerSpec make_spec(const std::string& kind, int n_trees, int mtry, int min_leaf, int max_depth,
                      bool recalibrate, std::uint64_t seed) {
  LearnerSpec s;
  s.kind = parse_learner_kind(kind);
  s.forest.n_trees = n_trees;
  s.forest.mtry = mtry;
  s.forest.min_leaf = min_leaf;
  s.forest.max_depth = max_depth;
  s.recalibrate = recalibrate;
  s.seed = seed;
  s.validate();
  return s;
}

py::dict prediction_dict(const std::vector<MuPrediction>& pred) {
  std::vector<double> mu0, mu1, e;
  std::vector<bool> in;
  for (const auto& p : pred) {
    mu0.push_back(p.mu.mu0);
    mu1.push_back(p.mu.mu1);
    e.push_back(p.propensity);
    in.push_back(p.in_support);
  }
  py::dict d;
  d["mu0"] = to_array(mu0);
  d["mu1"] = to_array(mu1);
  d["propensity"] = to_array(e);
  d["in_support"] = py::array(py::cast(in));
  return d;
}

StageResult run_stage(const std::string& stage, const RunConfig& config) {
  if (stage == "synth") return cmd_synth(config);
  if (stage == "split") return cmd_split(config);
  if (stage == "fit") return cmd_fit(config);
  if (stage == "estimate") return cmd_estimate(config);
  if (stage == "bootstrap") return cmd_bootstrap(config);
  if (stage == "evaluate") return cmd_evaluate(config);
  if (stage == "run") return cmd_run(config);
  throw ValidationError("unknown stage '" + stage + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Counterfactual adverse drug event estimation";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);

  py::class_<EffectEstimate>(m, "EffectEstimate")
      .def(py::init([](double r0, double r1) { return EffectEstimate{r0, r1}; }), py::arg("risk0"),
           py::arg("risk1"))
      .def_readwrite("risk0", &EffectEstimate::risk0)
      .def_readwrite("risk1", &EffectEstimate::risk1)
      .def_property_readonly("ard", &EffectEstimate::ard)
      .def_property_readonly("rr", &EffectEstimate::rr)
      .def_property_readonly("err", &EffectEstimate::err)
      .def_property_readonly("pc_low", &EffectEstimate::pc_low)
      .def("__repr__", [](const EffectEstimate& e) {
        std::ostringstream os;
        os << "EffectEstimate(risk0=" << e.risk0 << ", risk1=" << e.risk1 << ")";
        return os.str();
      });

  m.def("pc_low", [](double mu0, double mu1) { return pc_low(MuPair{mu0, mu1}); }, py::arg("mu0"),
        py::arg("mu1"), "max(0, 1 - mu0/mu1)");

  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("ppv",
        [](const std::vector<double>& s, const std::vector<int>& y, double threshold) {
          return ppv(s, y, threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
  m.def("mse", [](const std::vector<double>& a, const std::vector<double>& b) { return mse(a, b); },
        py::arg("predictions"), py::arg("targets"));
  m.def("pearson",
        [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); },
        py::arg("x"), py::arg("y"));
  m.def("percentile_ci",
        [](const std::vector<double>& v, double level) { return percentile_ci(v, level); },
        py::arg("values"), py::arg("level") = 0.95);
  m.def("map_expert_label",
        [](const std::string& c) { return map_expert_label(parse_expert_category(c)); },
        py::arg("category"));
  m.def("dichotomize_label",
        [](const std::string& c) { return dichotomize_label(parse_expert_category(c)); },
        py::arg("category"));

  py::class_<Cohort>(m, "Cohort")
      .def_static("read",
                  [](const std::filesystem::path& cohort, const std::filesystem::path& schema) {
                    return read_cohort(cohort, schema);
                  },
                  py::arg("cohort"), py::arg("schema"))
      .def("write", [](const Cohort& c, const std::filesystem::path& p) { write_cohort(c, p); })
      .def("__len__", &Cohort::size)
      .def_property_readonly("covariate_names", [](const Cohort& c) { return covariate_names(c.schema); })
      .def_property_readonly("admission_ids",
                             [](const Cohort& c) {
                               std::vector<std::string> ids;
                               for (const auto& a : c.admissions) ids.push_back(a.admission_id);
                               return ids;
                             })
      .def_property_readonly("cluster_ids",
                             [](const Cohort& c) {
                               std::vector<std::string> ids;
                               for (const auto& a : c.admissions) ids.push_back(a.cluster_id);
                               return ids;
                             })
      .def_property_readonly("treatment",
                             [](const Cohort& c) {
                               std::vector<int> t;
                               for (const auto& a : c.admissions) t.push_back(a.treatment);
                               return py::array(py::cast(t));
                             })
      .def_property_readonly("outcome",
                             [](const Cohort& c) {
                               std::vector<int> y;
                               for (const auto& a : c.admissions) y.push_back(a.outcome.value_or(-1));
                               return py::array(py::cast(y));
                             },
                             "Outcome per admission; -1 where unobserved.")
      .def_property_readonly("covariates", &covariate_array);

  py::class_<DgpConfig>(m, "DgpConfig")
      .def(py::init([](std::size_t n, std::uint64_t seed, const std::string& coupling) {
             return default_dgp_config(n, seed, parse_coupling(coupling));
           }),
           py::arg("n_admissions") = 1000, py::arg("seed") = 0, py::arg("coupling") = "monotone")
      .def_readwrite("n_admissions", &DgpConfig::n_admissions)
      .def_readwrite("n_clusters", &DgpConfig::n_clusters)
      .def_readwrite("propensity_coefficients", &DgpConfig::propensity_coefficients)
      .def_readwrite("baseline_coefficients", &DgpConfig::baseline_coefficients)
      .def_readwrite("effect_coefficients", &DgpConfig::effect_coefficients)
      .def_readwrite("missingness_rate", &DgpConfig::missingness_rate)
      .def_readwrite("cluster_intercept_sd", &DgpConfig::cluster_intercept_sd)
      .def_readwrite("seed", &DgpConfig::seed)
      .def_property(
          "coupling", [](const DgpConfig& c) { return std::string(to_string(c.coupling)); },
          [](DgpConfig& c, const std::string& s) { c.coupling = parse_coupling(s); });

  py::class_<SyntheticCohort>(m, "SyntheticCohort")
      .def_property_readonly("cohort", &SyntheticCohort::cohort)
      .def_property_readonly("p0",
                             [](const SyntheticCohort& s) {
                               std::vector<double> v;
                               for (const auto& a : s.admissions) v.push_back(a.p0);
                               return to_array(v);
                             })
      .def_property_readonly("p1",
                             [](const SyntheticCohort& s) {
                               std::vector<double> v;
                               for (const auto& a : s.admissions) v.push_back(a.p1);
                               return to_array(v);
                             })
      .def("true_att", [](const SyntheticCohort& s) { return true_att(s.admissions); })
      .def("true_pc",
           [](const SyntheticCohort& s) {
             std::vector<double> v;
             for (const auto& a : s.admissions)
               v.push_back(a.admission.treatment == 1 && a.admission.outcome == 1
                               ? true_pc(a)
                               : std::numeric_limits<double>::quiet_NaN());
             return to_array(v);
           },
           "True probability of causation; NaN outside treated cases with the outcome.");

  m.def("generate_cohort", &generate_cohort, py::arg("config"));

  py::class_<TLearnerModel>(m, "TLearner")
      .def_property_readonly("support",
                             [](const TLearnerModel& t) { return std::make_pair(t.support.lower, t.support.upper); })
      .def_property_readonly("selected_features", [](const TLearnerModel& t) { return t.model1.feature_names(); })
      .def("predict", [](const TLearnerModel& t, const Cohort& c) { return prediction_dict(predict_mu(t, c)); },
           py::arg("cohort"))
      .def("att", [](const TLearnerModel& t, const Cohort& c) { return att_tlearner(t, c); }, py::arg("cohort"))
      .def("att_iptw",
           [](const TLearnerModel& t, const Cohort& c) {
             const auto kept = with_outcomes(c);
             return att_iptw(predict_propensity(t, kept), treatment_vector(kept), outcome_vector(kept));
           },
           py::arg("cohort"))
      .def("pc_low_cases",
           [](const TLearnerModel& t, const Cohort& c) {
             py::list out;
             for (const auto& e : pc_low_cases(t, c)) {
               py::dict d;
               d["admission_id"] = e.admission_id;
               d["mu0"] = e.mu.mu0;
               d["mu1"] = e.mu.mu1;
               d["pc_low"] = e.pc_low;
               d["in_support"] = e.in_support;
               out.append(d);
             }
             return out;
           },
           py::arg("cohort"))
      .def("save",
           [](const TLearnerModel& t) {
             std::ostringstream os;
             t.serialize(os);
             return py::bytes(os.str());
           })
      .def_static("load", [](const py::bytes& b) {
        std::istringstream is{std::string(b)};
        return TLearnerModel::deserialize(is);
      });

  m.def("fit_tlearner",
        [](const Cohort& c, const std::string& kind, int n_trees, int mtry, int min_leaf, int max_depth,
           bool recalibrate, std::uint64_t seed) {
          const auto spec = make_spec(kind, n_trees, mtry, min_leaf, max_depth, recalibrate, seed);
          py::gil_scoped_release release;
          return fit_tlearner(c, spec, spec, seed);
        },
        py::arg("cohort"), py::arg("kind") = "logistic", py::arg("n_trees") = 500, py::arg("mtry") = 0,
        py::arg("min_leaf") = 5, py::arg("max_depth") = 0, py::arg("recalibrate") = true,
        py::arg("seed") = 0);

  m.def("run_stage",
        [](const std::string& stage, const std::filesystem::path& config_path) {
          const auto config = RunConfig::load(config_path);
          StageResult r;
          {
            py::gil_scoped_release release;
            r = run_stage(stage, config);
          }
          std::vector<std::filesystem::path> out;
          for (const auto& f : r.files) out.push_back(config.output_dir / f);
          return out;
        },
        py::arg("stage"), py::arg("config"),
        "Runs one pipeline stage (synth, split, fit, estimate, bootstrap, evaluate or run) and "
        "returns the files it wrote.");
}
