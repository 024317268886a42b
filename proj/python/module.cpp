// Python bindings: panels in, plain dicts out.

#include "ctwfe/cli.hpp"
#include "ctwfe/error.hpp"
#include "ctwfe/estimator.hpp"
#include "ctwfe/inference.hpp"
#include "ctwfe/io.hpp"
#include "ctwfe/oracle.hpp"
#include "ctwfe/panel.hpp"
#include "ctwfe/segregation.hpp"
#include "ctwfe/simulate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

namespace py = pybind11;
using namespace ctwfe;

namespace {

PanelData make_panel(const Eigen::MatrixXd& outcome, std::vector<int> periods, std::vector<std::optional<int>> treatment,
                     std::optional<std::vector<std::string>> units, std::vector<Eigen::MatrixXd> covariates,
                     std::vector<std::string> covariate_names) {
    PanelData p;
    p.outcome = outcome;
    p.periods = std::move(periods);
    p.treatment = std::move(treatment);
    if (units) {
        p.units = std::move(*units);
    } else {
        for (Eigen::Index i = 0; i < outcome.cols(); ++i) p.units.push_back(std::to_string(i));
    }
    p.covariates = std::move(covariates);
    p.covariate_names = std::move(covariate_names);
    for (std::size_t q = p.covariate_names.size(); q < p.covariates.size(); ++q) p.covariate_names.push_back("x" + std::to_string(q));
    return p;
}

py::dict effects_dict(const EffectReport& report) {
    py::list rows;
    for (const auto& e : report.effects) {
        py::dict d;
        d["type"] = e.type;
        d["r"] = e.r;
        d["bin"] = e.bin;
        d["differenced"] = e.differenced;
        d["cumulative"] = e.cumulative;
        d["se"] = e.se;
        d["note"] = e.note;
        rows.append(d);
    }
    py::list time;
    for (const auto& t : report.time_effects) {
        py::dict d;
        d["type"] = t.type;
        d["period"] = t.period;
        d["level"] = t.level;
        time.append(d);
    }
    py::dict out;
    out["effects"] = rows;
    out["time_effects"] = time;
    return out;
}

py::dict fit_panel(const PanelData& panel, int types, const std::string& mode, int lead_window, std::optional<int> lag_bin,
                   bool shared_leads, bool type_specific_slopes, int restarts, int max_iterations, std::uint64_t seed,
                   double tolerance, unsigned threads) {
    FitConfig config;
    config.spec.types = types;
    config.spec.mode = parse_differencing(mode);
    config.spec.lead_window = lead_window;
    config.spec.lag_bin = lag_bin;
    config.spec.shared_leads = shared_leads;
    config.spec.type_specific_slopes = type_specific_slopes;
    config.restarts = restarts;
    config.max_iterations = max_iterations;
    config.seed = seed;
    config.tolerance = tolerance;
    config.threads = threads;

    FitResult result;
    EffectReport report;
    {
        py::gil_scoped_release release;
        auto reindexed = std::make_shared<const PanelData>(reindex_times(panel));
        const DifferencedPanel dp = difference(reindexed, config.spec.mode);
        result = fit(dp, config);
        report = cumulative_effects(result.estimates, fit_vcov(dp, result));
    }

    py::dict coefficients;
    for (std::size_t j = 0; j < result.estimates.layout.size(); ++j)
        if (result.estimates.estimated[j]) coefficients[py::str(result.estimates.layout.columns()[j].name())] = result.estimates[j];
    py::list restarts_out;
    for (const auto& s : result.restarts) {
        py::dict d;
        d["restart"] = s.restart;
        d["objective"] = s.objective;
        d["status"] = to_string(s.status);
        std::vector<double> trace;
        for (const auto& it : s.trace) trace.push_back(it.objective);
        d["trace"] = trace;
        restarts_out.append(d);
    }
    py::dict out = effects_dict(report);
    out["assignment"] = result.assignment.labels();
    out["objective"] = result.objective;
    out["coefficients"] = coefficients;
    out["selected_restart"] = result.selected_restart;
    out["restarts"] = restarts_out;
    out["warnings"] = result.warnings;
    return out;
}

}  // namespace

PYBIND11_MODULE(ctwfe, m) {
    m.doc() = "Conditional two-way fixed effects event studies with latent types";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<PanelData>(m, "Panel")
        .def(py::init(&make_panel), py::arg("outcome"), py::arg("periods"), py::arg("treatment"),
             py::arg("units") = py::none(), py::arg("covariates") = std::vector<Eigen::MatrixXd>{},
             py::arg("covariate_names") = std::vector<std::string>{},
             "outcome is periods x units; treatment holds the first treated period or None")
        .def_readonly("units", &PanelData::units)
        .def_readonly("periods", &PanelData::periods)
        .def_readonly("outcome", &PanelData::outcome)
        .def_readonly("covariates", &PanelData::covariates)
        .def_readonly("covariate_names", &PanelData::covariate_names)
        .def_readonly("treatment", &PanelData::treatment)
        .def_readonly("calendar_offset", &PanelData::calendar_offset)
        .def("__repr__", [](const PanelData& p) {
            return "<ctwfe.Panel " + std::to_string(p.unit_count()) + " units x " + std::to_string(p.period_count()) + " periods>";
        });

    m.def(
        "read_panel_csv",
        [](const std::string& path, const std::string& unit, const std::string& time, const std::string& outcome,
           const std::string& treatment, std::vector<std::string> covariates) {
            ColumnMapping columns{unit, time, outcome, treatment, std::move(covariates)};
            return read_panel_file(path, columns);
        },
        py::arg("path"), py::arg("unit") = "unit", py::arg("time") = "time", py::arg("outcome") = "y",
        py::arg("treatment") = "treatment_time", py::arg("covariates") = std::vector<std::string>{});

    m.def("validate", [](const PanelData& panel) {
        py::list out;
        for (const auto& v : validate(panel).violations) {
            py::dict d;
            d["kind"] = to_string(v.kind);
            d["message"] = v.message;
            d["unit"] = v.unit;
            d["period"] = v.period;
            out.append(d);
        }
        return out;
    });

    m.def("reindex_times", &reindex_times, py::arg("panel"));

    m.def("fit", &fit_panel, py::arg("panel"), py::arg("types") = 2, py::arg("mode") = "first-diff",
          py::arg("lead_window") = 0, py::arg("lag_bin") = py::none(), py::arg("shared_leads") = false,
          py::arg("type_specific_slopes") = false, py::arg("restarts") = 50, py::arg("max_iterations") = 100,
          py::arg("seed") = 0, py::arg("tolerance") = 0.0, py::arg("threads") = 0);

    m.def(
        "exhaustive_fit",
        [](const PanelData& panel, int types, const std::string& mode, int lead_window) {
            DesignSpec spec;
            spec.types = types;
            spec.mode = parse_differencing(mode);
            spec.lead_window = lead_window;
            auto reindexed = std::make_shared<const PanelData>(reindex_times(panel));
            const auto r = exhaustive_fit(difference(reindexed, spec.mode), spec);
            py::dict d;
            d["assignment"] = r.best_assignment.labels();
            d["objective"] = r.best_objective;
            d["enumerated"] = r.enumerated;
            return d;
        },
        py::arg("panel"), py::arg("types") = 2, py::arg("mode") = "first-diff", py::arg("lead_window") = 0);

    m.def("presets", &preset_names);

    m.def(
        "simulate",
        [](const std::string& name, int N, int T, std::uint64_t seed, std::optional<double> noise_sd) {
            DgpSpec spec = preset(name, N, T, seed);
            if (noise_sd) spec.noise_sd = *noise_sd;
            Simulation sim = generate(spec);
            py::dict d;
            d["panel"] = sim.panel;
            d["labels"] = sim.labels.labels();
            d["unit_beta"] = sim.unit_beta;
            return d;
        },
        py::arg("preset"), py::arg("N"), py::arg("T"), py::arg("seed") = 0, py::arg("noise_sd") = py::none());

    m.def("misclassification_rate", [](const std::vector<int>& estimated, const std::vector<int>& truth, int types) {
        return misclassification_rate(TypeAssignment(estimated, types), TypeAssignment(truth, types));
    });

    m.def("segregation_index", &segregation_index, py::arg("school_counts"),
          "school_counts: (black, white) pairs, one per school");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"ctwfe"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
