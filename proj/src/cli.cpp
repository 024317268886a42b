#include "ctwfe/cli.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/parallel.hpp"
#include "ctwfe/segregation.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace ctwfe::cli {

using nlohmann::json;

namespace {

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw DataError(std::string("config key '") + key + "' has the wrong type", key);
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw DataError(where + " must be a JSON object", where);
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw DataError("unknown key '" + key + "' in " + where, key);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'", "config");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("config '" + path + "' is not valid JSON: " + e.what(), "config");
    }
}

std::ofstream open_output(const std::string& directory, const std::string& name) {
    std::ofstream out(std::filesystem::path(directory) / name, std::ios::binary);
    if (!out) throw DataError("cannot write '" + name + "' in '" + directory + "'", "output");
    return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void RunConfig::apply(const json& j) {
    reject_unknown(j,
                   {"input", "output", "columns", "k", "mode", "lead_window", "lag_bin", "shared_leads",
                    "type_specific_slopes", "restarts", "max_iterations", "seed", "tolerance", "threads",
                    "het_include_never_treated"},
                   "fit config");
    take(j, "input", input);
    take(j, "output", output);
    if (j.contains("columns")) {
        const json& c = j.at("columns");
        reject_unknown(c, {"unit", "time", "outcome", "treatment", "covariates"}, "columns");
        take(c, "unit", columns.unit);
        take(c, "time", columns.time);
        take(c, "outcome", columns.outcome);
        take(c, "treatment", columns.treatment);
        take(c, "covariates", columns.covariates);
    }
    take(j, "k", types);
    if (j.contains("mode")) {
        std::string m;
        take(j, "mode", m);
        mode = parse_differencing(m);
    }
    take(j, "lead_window", lead_window);
    if (j.contains("lag_bin")) {
        if (j.at("lag_bin").is_null()) {
            lag_bin.reset();
        } else {
            int bin = 0;
            take(j, "lag_bin", bin);
            lag_bin = bin;
        }
    }
    take(j, "shared_leads", shared_leads);
    take(j, "type_specific_slopes", type_specific_slopes);
    take(j, "restarts", restarts);
    take(j, "max_iterations", max_iterations);
    take(j, "seed", seed);
    take(j, "tolerance", tolerance);
    take(j, "threads", threads);
    take(j, "het_include_never_treated", het_include_never_treated);
}

FitConfig RunConfig::fit_config() const {
    FitConfig fc;
    fc.spec.types = types;
    fc.spec.lead_window = lead_window;
    fc.spec.lag_bin = lag_bin;
    fc.spec.shared_leads = shared_leads;
    fc.spec.type_specific_slopes = type_specific_slopes;
    fc.spec.mode = mode;
    fc.restarts = restarts;
    fc.max_iterations = max_iterations;
    fc.seed = seed;
    fc.tolerance = tolerance;
    fc.threads = threads;
    return fc;
}

FitRun run_fit(const RunConfig& config) {
    if (config.input.empty()) throw DataError("no input file given", "input");
    return run_fit(config, read_panel_file(config.input, config.columns));
}

FitRun run_fit(const RunConfig& config, const PanelData& calendar_panel) {
    const ValidationReport report = validate(calendar_panel);
    if (!report.ok()) {
        const auto& first = report.violations.front();
        std::string message = first.message;
        if (report.violations.size() > 1)
            message += " (and " + std::to_string(report.violations.size() - 1) + " more violations)";
        throw DataError(message, to_string(first.kind));
    }
    if (config.types < 1) throw DataError("K must be at least 1", "k");

    FitRun run;
    run.panel = std::make_shared<const PanelData>(reindex_times(calendar_panel));
    run.transformed = difference(run.panel, config.mode);
    run.result = fit(run.transformed, config.fit_config());
    run.vcov = fit_vcov(run.transformed, run.result);
    run.effects = cumulative_effects(run.result.estimates, run.vcov);
    if (run.panel->covariate_count() > 0 && config.types >= 2)
        run.balance = balancedness_test(run.result.assignment, pretreatment_means(*run.panel));
    for (int k = 1; k <= config.types; ++k) {
        try {
            run.het.push_back({k, het_effect_r0(*run.panel, run.result.assignment, k, config.het_include_never_treated), {}});
        } catch (const DataError& e) {
            run.het.push_back({k, std::nullopt, e.what()});
        }
    }
    return run;
}

void write_fit_outputs(const RunConfig& config, const FitRun& run, const std::string& directory) {
    std::filesystem::create_directories(directory);
    const PanelData& panel = *run.panel;
    const FitResult& result = run.result;
    const auto& layout = result.estimates.layout;

    {
        auto out = open_output(directory, "assignments.csv");
        out << "unit,type\n";
        for (std::size_t i = 0; i < panel.unit_count(); ++i) out << csv_field(panel.units[i]) << ',' << result.assignment[i] << '\n';
    }
    {
        auto out = open_output(directory, "effects.csv");
        out << "k,r,binned,differenced,cumulative,se,note\n";
        for (const auto& row : run.effects.effects) {
            out << (row.type == 0 ? std::string("shared") : std::to_string(row.type)) << ',' << row.r << ','
                << (row.bin ? 1 : 0) << ',' << opt(row.differenced) << ',' << opt(row.cumulative) << ',' << opt(row.se)
                << ',' << csv_field(row.note) << '\n';
        }
    }
    {
        auto out = open_output(directory, "timefe.csv");
        out << "k,t,period,level\n";
        for (const auto& row : run.effects.time_effects)
            out << row.type << ',' << row.period << ',' << row.period + panel.calendar_offset << ','
                << format_double(row.level) << '\n';
    }
    if (run.balance) {
        auto out = open_output(directory, "balance.csv");
        out << "type_a,type_b,variable,mean_a,sd_a,mean_b,sd_b,difference,se\n";
        for (const auto& row : run.balance->rows)
            out << row.type_a << ',' << row.type_b << ',' << csv_field(row.variable) << ',' << format_double(row.mean_a)
                << ',' << format_double(row.sd_a) << ',' << format_double(row.mean_b) << ','
                << format_double(row.sd_b) << ',' << format_double(row.difference) << ',' << format_double(row.se)
                << '\n';
    }

    json j;
    j["mode"] = to_string(config.mode);
    j["K"] = config.types;
    j["N"] = panel.unit_count();
    j["T0"] = panel.pre_periods();
    j["T1"] = panel.post_periods();
    j["calendar_offset"] = panel.calendar_offset;
    j["seed"] = config.seed;
    j["objective"] = result.objective;
    j["iterations"] = result.trace.size();
    j["selected_restart"] = result.selected_restart;
    j["trace"] = json::array();
    for (const auto& it : result.trace) j["trace"].push_back({{"objective", it.objective}, {"changed", it.changed}});
    j["type_sizes"] = result.assignment.type_sizes();
    j["restarts"] = json::array();
    for (const auto& r : result.restarts)
        j["restarts"].push_back(
            {{"restart", r.restart}, {"objective", r.objective}, {"iterations", r.iterations()}, {"status", to_string(r.status)}});
    j["dropped"] = json::array();
    for (const auto& d : result.dropped) j["dropped"].push_back({{"column", d.column.name()}, {"reason", d.reason}});
    j["rank_dropped"] = json::array();
    for (const auto& c : result.rank_dropped) j["rank_dropped"].push_back(c.name());
    j["warnings"] = result.warnings;
    j["coefficients"] = json::array();
    for (std::size_t c = 0; c < layout.size(); ++c) {
        if (!run.vcov.position(c)) continue;
        j["coefficients"].push_back({{"column", layout.columns()[c].name()},
                                     {"value", result.estimates[c]},
                                     {"se", number_or_null(run.vcov.standard_error(c))}});
    }
    j["het_effect_r0"] = json::array();
    for (const auto& h : run.het) {
        if (h.effect)
            j["het_effect_r0"].push_back({{"k", h.type},
                                          {"estimate", h.effect->estimate},
                                          {"se", number_or_null(h.effect->standard_error)},
                                          {"treated", h.effect->treated},
                                          {"comparison", h.effect->comparison}});
        else
            j["het_effect_r0"].push_back({{"k", h.type}, {"note", h.note}});
    }
    if (run.balance) {
        j["balance_joint"] = json::array();
        for (const auto& b : run.balance->joint)
            j["balance_joint"].push_back({{"type_a", b.type_a},
                                          {"type_b", b.type_b},
                                          {"n_a", b.n_a},
                                          {"n_b", b.n_b},
                                          {"statistic", number_or_null(b.statistic)},
                                          {"df", b.df},
                                          {"p_value", number_or_null(b.p_value)},
                                          {"notes", b.notes}});
    }
    j["notes"] = json::array({"standard errors are clustered by unit and treat the estimated types as known"});
    if (config.mode == Differencing::MeanDiff)
        j["notes"].push_back("mean differencing assumes strictly exogenous errors");

    auto out = open_output(directory, "fit.json");
    out << j.dump(2) << '\n';
}

json to_json(const DgpSpec& s) {
    return {{"N", s.N},
            {"T0", s.T0},
            {"T1", s.T1},
            {"K", s.K},
            {"p", s.p},
            {"type_probs", s.type_probs},
            {"delta", s.delta},
            {"beta", s.beta},
            {"unit_beta_sd", s.unit_beta_sd},
            {"beta_timing_slope", s.beta_timing_slope},
            {"theta", s.theta},
            {"covariate_mean", s.covariate_mean},
            {"alpha_sd", s.alpha_sd},
            {"noise_sd", s.noise_sd},
            {"timing", {{"support", s.timing.support}, {"probs", s.timing.probs}, {"never_treated", s.timing.never_treated}}},
            {"error_process", to_string(s.error)},
            {"error_coefficient", s.error_coefficient},
            {"seed", s.seed}};
}

DgpSpec dgp_from_json(const json& j, DgpSpec s) {
    reject_unknown(j,
                   {"N", "T0", "T1", "K", "p", "type_probs", "delta", "beta", "unit_beta_sd", "beta_timing_slope",
                    "theta", "covariate_mean", "alpha_sd", "noise_sd", "timing", "error_process",
                    "error_coefficient", "seed"},
                   "dgp");
    take(j, "N", s.N);
    take(j, "T0", s.T0);
    take(j, "T1", s.T1);
    take(j, "K", s.K);
    take(j, "p", s.p);
    take(j, "type_probs", s.type_probs);
    take(j, "delta", s.delta);
    take(j, "beta", s.beta);
    take(j, "unit_beta_sd", s.unit_beta_sd);
    take(j, "beta_timing_slope", s.beta_timing_slope);
    take(j, "theta", s.theta);
    take(j, "covariate_mean", s.covariate_mean);
    take(j, "alpha_sd", s.alpha_sd);
    take(j, "noise_sd", s.noise_sd);
    if (j.contains("timing")) {
        const json& t = j.at("timing");
        reject_unknown(t, {"support", "probs", "never_treated"}, "timing");
        take(t, "support", s.timing.support);
        take(t, "probs", s.timing.probs);
        take(t, "never_treated", s.timing.never_treated);
    }
    if (j.contains("error_process")) {
        std::string e;
        take(j, "error_process", e);
        s.error = parse_error_process(e);
    }
    take(j, "error_coefficient", s.error_coefficient);
    take(j, "seed", s.seed);
    return s;
}

void SimulateConfig::apply(const json& j) {
    reject_unknown(j,
                   {"preset", "N", "T", "seed", "dgp", "replications", "k", "mode", "restarts", "max_iterations",
                    "lead_window", "lag_bin", "pooled", "het", "threads", "output", "export"},
                   "simulate config");
    if (j.contains("preset")) {
        std::string p;
        take(j, "preset", p);
        preset = p;
    }
    take(j, "N", N);
    take(j, "T", T);
    take(j, "seed", seed);
    if (j.contains("dgp")) dgp_overrides = j.at("dgp");
    take(j, "replications", replications);
    if (j.contains("k")) {
        int k = 0;
        take(j, "k", k);
        types = k;
    }
    if (j.contains("mode")) {
        std::string m;
        take(j, "mode", m);
        study.mode = parse_differencing(m);
    }
    take(j, "restarts", study.restarts);
    take(j, "max_iterations", study.max_iterations);
    take(j, "lead_window", study.lead_window);
    if (j.contains("lag_bin") && !j.at("lag_bin").is_null()) {
        int bin = 0;
        take(j, "lag_bin", bin);
        study.lag_bin = bin;
    }
    take(j, "pooled", study.pooled);
    take(j, "het", study.het_effects);
    take(j, "threads", study.threads);
    take(j, "output", output);
    if (j.contains("export")) {
        std::string e;
        take(j, "export", e);
        export_panel = e;
    }
}

DgpSpec SimulateConfig::dgp() const {
    DgpSpec base;
    if (preset) {
        base = ctwfe::preset(*preset, N, T, seed);
    } else if (dgp_overrides.empty()) {
        throw DataError("simulate needs a preset or a dgp specification", "preset");
    }
    base.seed = seed;
    DgpSpec spec = dgp_from_json(dgp_overrides, base);
    if (dgp_overrides.contains("seed")) spec.seed = dgp_overrides.at("seed").get<std::uint64_t>();
    spec.check();
    return spec;
}

void write_simulation_outputs(const SimulateConfig& config, const DgpSpec& spec,
                              const std::vector<ReplicationResult>& results, const std::string& directory) {
    std::filesystem::create_directories(directory);
    {
        auto out = open_output(directory, "replications.csv");
        out << "rep,seed,ok,misclassification,objective,estimator,k,true_k,r,truth,estimate,se,covered,error\n";
        for (const auto& res : results) {
            const std::string head = std::to_string(res.rep) + ',' + std::to_string(res.seed) + ',' +
                                     (res.ok ? "1" : "0") + ',' + format_double(res.misclassification) + ',' +
                                     format_double(res.objective) + ',';
            if (!res.ok || (res.effects.empty() && res.pooled.empty())) {
                out << head << ",,,,,,,," << csv_field(res.error) << '\n';
                continue;
            }
            auto emit = [&](const char* estimator, const EffectOutcome& e) {
                out << head << estimator << ',' << e.type << ',' << e.true_type << ',' << e.r << ','
                    << format_double(e.truth) << ',' << format_double(e.estimate) << ',' << format_double(e.se)
                    << ',' << (e.covered ? 1 : 0) << ",\n";
            };
            for (const auto& e : res.effects) emit("typed", e);
            for (const auto& e : res.pooled) emit("pooled", e);
        }
    }
    const StudySummary summary = summarize(results);
    {
        auto out = open_output(directory, "summary.csv");
        out << "estimator,type,r,n,truth,mean_estimate,bias,mc_sd,rmse,mean_se,coverage\n";
        for (const auto& row : summary.rows)
            out << row.estimator << ',' << row.type << ',' << row.r << ',' << row.n << ',' << format_double(row.truth)
                << ',' << format_double(row.mean_estimate) << ',' << format_double(row.bias) << ','
                << format_double(row.mc_sd) << ',' << format_double(row.rmse) << ',' << format_double(row.mean_se)
                << ',' << format_double(row.coverage) << '\n';
    }
    bool any_het = false;
    for (const auto& res : results) any_het = any_het || !res.het.empty();
    if (any_het) {
        auto out = open_output(directory, "het.csv");
        out << "rep,k,true_k,target,estimate,se\n";
        for (const auto& res : results)
            for (const auto& h : res.het)
                out << res.rep << ',' << h.type << ',' << h.true_type << ',' << format_double(h.target) << ','
                    << format_double(h.estimate) << ',' << format_double(h.se) << '\n';
    }
    json j;
    j["replications"] = summary.replications;
    j["failed"] = summary.failed;
    j["mean_misclassification"] = summary.mean_misclassification;
    j["sd_misclassification"] = summary.sd_misclassification;
    j["preset"] = config.preset ? json(*config.preset) : json(nullptr);
    j["dgp"] = to_json(spec);
    j["study"] = {{"k", config.study.types},
                  {"mode", to_string(config.study.mode)},
                  {"restarts", config.study.restarts},
                  {"max_iterations", config.study.max_iterations},
                  {"lead_window", config.study.lead_window},
                  {"lag_bin", config.study.lag_bin ? json(*config.study.lag_bin) : json(nullptr)},
                  {"pooled", config.study.pooled}};
    auto out = open_output(directory, "summary.json");
    out << j.dump(2) << '\n';
}

namespace {

struct Failure {
    int code;
    std::string kind;
    std::string message;
    std::string field;
};

void report(std::ostream& err, const Failure& f) {
    json j = {{"error", {{"exit_code", f.code}, {"kind", f.kind}, {"message", f.message}}}};
    if (!f.field.empty()) j["error"]["field"] = f.field;
    err << j.dump() << '\n';
}

void mean_diff_banner(std::ostream& err) {
    err << "warning: mean differencing is valid only under strict exogeneity of the errors; "
           "first differencing needs only sequential exogeneity\n";
}

std::vector<std::pair<double, double>> parse_counts(const std::string& text) {
    std::vector<std::pair<double, double>> counts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw DataError("counts must look like b:w,b:w", "counts");
        counts.emplace_back(parse_double(item.substr(0, colon), "counts"), parse_double(item.substr(colon + 1), "counts"));
    }
    return counts;
}

struct ColumnFlags {
    std::optional<std::string> unit, time, outcome, treatment;
    std::optional<std::vector<std::string>> covariates;

    void add(CLI::App* app) {
        app->add_option("--unit-col", unit, "unit id column");
        app->add_option("--time-col", time, "period column");
        app->add_option("--outcome-col", outcome, "outcome column");
        app->add_option("--treatment-col", treatment, "first treatment period column (empty = never treated)");
        app->add_option("--covariates", covariates, "covariate columns")->delimiter(',');
    }
    void apply(ColumnMapping& c) const {
        if (unit) c.unit = *unit;
        if (time) c.time = *time;
        if (outcome) c.outcome = *outcome;
        if (treatment) c.treatment = *treatment;
        if (covariates) c.covariates = *covariates;
    }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conditional two-way fixed-effects event-study estimator"};
    app.require_subcommand(1);
    const std::vector<std::string> modes{"first-diff", "mean-diff"};

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "classify units into types and estimate type-specific effects");
    std::optional<std::string> fit_config_path, fit_input, fit_output, fit_mode;
    std::optional<std::uint64_t> fit_seed;
    std::optional<int> fit_k, fit_restarts, fit_lead, fit_bin, fit_max_it;
    std::optional<double> fit_tol;
    std::optional<unsigned> fit_threads;
    bool fit_shared = false, fit_slopes = false, fit_exclude_never = false;
    ColumnFlags fit_cols;
    fit_cmd->add_option("--config", fit_config_path, "JSON run configuration");
    fit_cmd->add_option("--input", fit_input, "long-format panel CSV");
    fit_cmd->add_option("--output", fit_output, "report directory");
    fit_cmd->add_option("--seed", fit_seed, "random seed");
    fit_cmd->add_option("--k", fit_k, "number of types")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--restarts", fit_restarts, "random restarts")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--mode", fit_mode, "differencing")->check(CLI::IsMember(modes));
    fit_cmd->add_option("--lead-window", fit_lead, "leads r = -l..-2 get coefficients")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--lag-bin", fit_bin, "lags beyond this share one coefficient")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--max-iterations", fit_max_it, "iterations per restart")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--tolerance", fit_tol, "objective improvement floor");
    fit_cmd->add_option("--threads", fit_threads, "worker threads (0 = all cores)");
    fit_cmd->add_flag("--shared-leads", fit_shared, "one set of lead coefficients for all types");
    fit_cmd->add_flag("--type-specific-slopes", fit_slopes, "covariate slopes per type");
    fit_cmd->add_flag("--exclude-never-treated", fit_exclude_never, "keep never-treated units out of het_effect_r0");
    fit_cols.add(fit_cmd);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study on a simulated design");
    std::optional<std::string> sim_config_path, sim_preset, sim_output, sim_mode, sim_export;
    std::optional<std::uint64_t> sim_seed;
    std::optional<int> sim_k, sim_restarts, sim_n, sim_t;
    std::optional<std::size_t> sim_reps;
    std::optional<unsigned> sim_threads;
    bool sim_no_pooled = false, sim_het = false;
    sim_cmd->add_option("--config", sim_config_path, "JSON simulation configuration");
    sim_cmd->add_option("--preset", sim_preset, "named design")->check(CLI::IsMember(preset_names()));
    sim_cmd->add_option("--units", sim_n, "N")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--periods", sim_t, "T, the number of differenced periods")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--replications", sim_reps, "replications")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim_seed, "random seed");
    sim_cmd->add_option("--k", sim_k, "number of types to fit")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--restarts", sim_restarts, "random restarts per fit")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--mode", sim_mode, "differencing")->check(CLI::IsMember(modes));
    sim_cmd->add_option("--output", sim_output, "report directory");
    sim_cmd->add_option("--export-panel", sim_export, "write replication 0's panel as CSV");
    sim_cmd->add_option("--threads", sim_threads, "worker threads (0 = all cores)");
    sim_cmd->add_flag("--no-pooled", sim_no_pooled, "skip the K = 1 comparison fit");
    sim_cmd->add_flag("--het", sim_het, "also compute het_effect_r0 per type");

    // segindex
    auto* seg_cmd = app.add_subcommand("segindex", "segregation index of a district from school counts");
    std::optional<std::string> seg_input, seg_counts;
    std::string seg_black = "black", seg_white = "white";
    seg_cmd->add_option("--input", seg_input, "CSV with one row per school");
    seg_cmd->add_option("--black-col", seg_black, "column of black student counts");
    seg_cmd->add_option("--white-col", seg_white, "column of white student counts");
    seg_cmd->add_option("--counts", seg_counts, "inline counts b:w,b:w,...");

    // validate
    auto* val_cmd = app.add_subcommand("validate", "check a panel CSV against the model's requirements");
    std::optional<std::string> val_config_path, val_input;
    ColumnFlags val_cols;
    val_cmd->add_option("--config", val_config_path, "JSON run configuration (for column names)");
    val_cmd->add_option("--input", val_input, "long-format panel CSV");
    val_cols.add(val_cmd);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kOk;
        } catch (const CLI::ParseError& e) {
            report(err, {kDataError, "usage", e.what(), {}});
            return kDataError;
        }

        if (fit_cmd->parsed()) {
            RunConfig config;
            if (fit_config_path) config.apply(read_json_file(*fit_config_path));
            if (fit_input) config.input = *fit_input;
            if (fit_output) config.output = *fit_output;
            if (fit_seed) config.seed = *fit_seed;
            if (fit_k) config.types = *fit_k;
            if (fit_restarts) config.restarts = *fit_restarts;
            if (fit_mode) config.mode = parse_differencing(*fit_mode);
            if (fit_lead) config.lead_window = *fit_lead;
            if (fit_bin) config.lag_bin = *fit_bin;
            if (fit_max_it) config.max_iterations = *fit_max_it;
            if (fit_tol) config.tolerance = *fit_tol;
            if (fit_threads) config.threads = *fit_threads;
            if (fit_shared) config.shared_leads = true;
            if (fit_slopes) config.type_specific_slopes = true;
            if (fit_exclude_never) config.het_include_never_treated = false;
            fit_cols.apply(config.columns);
            if (config.mode == Differencing::MeanDiff) mean_diff_banner(err);
            const FitRun run_result = run_fit(config);
            write_fit_outputs(config, run_result, config.output);
            out << "objective " << format_double(run_result.result.objective) << "; reports written to "
                << config.output << '\n';
            return kOk;
        }

        if (sim_cmd->parsed()) {
            SimulateConfig config;
            if (sim_config_path) config.apply(read_json_file(*sim_config_path));
            if (sim_preset) config.preset = *sim_preset;
            if (sim_n) config.N = *sim_n;
            if (sim_t) config.T = *sim_t;
            if (sim_reps) config.replications = *sim_reps;
            if (sim_seed) config.seed = *sim_seed;
            if (sim_k) config.types = *sim_k;
            if (sim_restarts) config.study.restarts = *sim_restarts;
            if (sim_mode) config.study.mode = parse_differencing(*sim_mode);
            if (sim_output) config.output = *sim_output;
            if (sim_export) config.export_panel = *sim_export;
            if (sim_threads) config.study.threads = *sim_threads;
            if (sim_no_pooled) config.study.pooled = false;
            if (sim_het) config.study.het_effects = true;
            if (config.study.mode == Differencing::MeanDiff) mean_diff_banner(err);

            const DgpSpec spec = config.dgp();
            config.study.types = config.types.value_or(spec.K);
            if (config.export_panel) {
                DgpSpec first = spec;
                first.seed = derive_seed(spec.seed, 0);
                std::ofstream csv(*config.export_panel, std::ios::binary);
                if (!csv) throw DataError("cannot write '" + *config.export_panel + "'", "export");
                const Simulation sim = generate(first);
                ColumnMapping names;
                names.covariates = sim.panel.covariate_names;
                write_panel(csv, sim.panel, names);
            }
            const auto results = run_study(spec, config.study, config.replications);
            write_simulation_outputs(config, spec, results, config.output);
            const StudySummary summary = summarize(results);
            out << "replications " << summary.replications << ", failed " << summary.failed
                << ", mean misclassification " << format_double(summary.mean_misclassification) << '\n';
            return kOk;
        }

        if (seg_cmd->parsed()) {
            std::vector<std::pair<double, double>> counts;
            if (seg_counts) {
                counts = parse_counts(*seg_counts);
            } else if (seg_input) {
                const CsvTable table = read_csv_file(*seg_input);
                const std::size_t b = table.column(seg_black);
                const std::size_t w = table.column(seg_white);
                for (const auto& row : table.rows)
                    counts.emplace_back(parse_double(row[b], seg_black), parse_double(row[w], seg_white));
            } else {
                throw DataError("segindex needs --counts or --input", "input");
            }
            out << format_double(segregation_index(counts)) << '\n';
            return kOk;
        }

        if (val_cmd->parsed()) {
            RunConfig config;
            if (val_config_path) config.apply(read_json_file(*val_config_path));
            if (val_input) config.input = *val_input;
            val_cols.apply(config.columns);
            if (config.input.empty()) throw DataError("no input file given", "input");
            const ValidationReport rep = validate(read_panel_file(config.input, config.columns));
            json j = {{"ok", rep.ok()}, {"violations", json::array()}};
            for (const auto& v : rep.violations) {
                json item = {{"kind", to_string(v.kind)}, {"message", v.message}};
                if (v.unit) item["unit"] = *v.unit;
                if (v.period) item["period"] = *v.period;
                j["violations"].push_back(item);
            }
            out << j.dump(2) << '\n';
            return rep.ok() ? kOk : kDataError;
        }
    } catch (const DataError& e) {
        report(err, {kDataError, "data", e.what(), e.field()});
        return kDataError;
    } catch (const NumericalError& e) {
        report(err, {kNumericalError, "numerical", e.what(), {}});
        return kNumericalError;
    } catch (const std::filesystem::filesystem_error& e) {
        report(err, {kDataError, "io", e.what(), {}});
        return kDataError;
    } catch (const std::exception& e) {
        report(err, {kNumericalError, "internal", e.what(), {}});
        return kNumericalError;
    }
    return kOk;
}

}  // namespace ctwfe::cli
