#pragma once

#include "ctwfe/estimator.hpp"
#include "ctwfe/inference.hpp"
#include "ctwfe/io.hpp"
#include "ctwfe/montecarlo.hpp"
#include "ctwfe/simulate.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ctwfe::cli {

enum ExitCode { kOk = 0, kDataError = 2, kNumericalError = 3 };

struct RunConfig {
    std::string input;
    ColumnMapping columns;
    int types = 2;
    Differencing mode = Differencing::FirstDiff;
    int lead_window = 0;
    std::optional<int> lag_bin;
    bool shared_leads = false;
    bool type_specific_slopes = false;
    int restarts = 50;
    int max_iterations = 100;
    std::uint64_t seed = 0;
    double tolerance = 0.0;
    unsigned threads = 0;
    bool het_include_never_treated = true;
    std::string output = ".";

    /// Overrides fields present in `j`; unknown keys are rejected.
    void apply(const nlohmann::json& j);
    FitConfig fit_config() const;
};

struct HetRow {
    int type;
    std::optional<HetEffect> effect;
    std::string note;
};

/// Everything cmd_fit computes, before it is written out.
struct FitRun {
    std::shared_ptr<const PanelData> panel;  // reindexed
    DifferencedPanel transformed;
    FitResult result;
    CovarianceEstimate vcov;
    EffectReport effects;
    std::optional<BalanceReport> balance;
    std::vector<HetRow> het;
};

FitRun run_fit(const RunConfig& config);
FitRun run_fit(const RunConfig& config, const PanelData& calendar_panel);

/// Writes assignments.csv, effects.csv, timefe.csv, fit.json and, with
/// covariates, balance.csv into `directory`.
void write_fit_outputs(const RunConfig& config, const FitRun& run, const std::string& directory);

struct SimulateConfig {
    std::optional<std::string> preset;
    int N = 200;
    int T = 20;
    std::uint64_t seed = 0;
    nlohmann::json dgp_overrides = nlohmann::json::object();
    std::size_t replications = 100;
    std::optional<int> types;  // defaults to the DGP's K
    StudyConfig study = [] {
        StudyConfig s;
        s.pooled = true;
        return s;
    }();
    std::string output = ".";
    std::optional<std::string> export_panel;  // CSV of replication 0's panel

    void apply(const nlohmann::json& j);
    DgpSpec dgp() const;
};

nlohmann::json to_json(const DgpSpec& spec);
/// Fields present in `j` override `base`.
DgpSpec dgp_from_json(const nlohmann::json& j, DgpSpec base = {});

void write_simulation_outputs(const SimulateConfig& config, const DgpSpec& spec,
                              const std::vector<ReplicationResult>& results, const std::string& directory);

/// Parses arguments, runs a subcommand and maps failures to exit codes;
/// errors go to `err` as a JSON object.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctwfe::cli
