#pragma once

#include "ctwfe/design.hpp"
#include "ctwfe/simulate.hpp"
#include "ctwfe/transform.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ctwfe {

struct StudyConfig {
    int types = 2;
    Differencing mode = Differencing::FirstDiff;
    int lead_window = 0;
    std::optional<int> lag_bin;
    int restarts = 10;
    int max_iterations = 100;
    bool pooled = false;       // also fit the K = 1 model
    bool het_effects = false;  // also compute het_effect_r0 per type
    double z_critical = 1.959963984540054;  // two-sided 95%
    unsigned threads = 0;      // across replications; each fit is single-threaded
};

struct EffectOutcome {
    int type;  // estimated type, matched to true type `true_type`
    int true_type;
    int r;
    double truth;
    double estimate;
    double se;
    bool covered;
};

struct HetOutcome {
    int type;
    int true_type;
    double target;    // mean beta_i0 over true-type units first treated at period 0
    double estimate;
    double se;
};

struct ReplicationResult {
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double misclassification = 0.0;
    double objective = 0.0;
    std::size_t trace_rises = 0;         // iterations whose objective exceeded the previous one, over every fit
    std::vector<EffectOutcome> effects;  // cumulative lag effects of the K-type fit
    std::vector<EffectOutcome> pooled;   // of the K = 1 fit (type 1, truth mu-weighted)
    std::vector<HetOutcome> het;
};

/// One replication: draw, reindex, fit, and score against the truth. The
/// data seed and the fit seed both derive from (spec.seed, rep).
ReplicationResult run_replication(const DgpSpec& spec, const StudyConfig& config, std::size_t rep);

std::vector<ReplicationResult> run_study(const DgpSpec& spec, const StudyConfig& config, std::size_t replications);

struct SummaryRow {
    std::string estimator;  // "typed" or "pooled"
    int type;               // true type (0 for pooled)
    int r;
    std::size_t n;
    double truth;           // mean over replications
    double mean_estimate;
    double bias;
    double mc_sd;           // standard deviation of the estimates
    double rmse;
    double mean_se;         // average reported standard error
    double coverage;
};

struct StudySummary {
    std::size_t replications = 0;
    std::size_t failed = 0;
    double mean_misclassification = 0.0;
    double sd_misclassification = 0.0;
    std::vector<SummaryRow> rows;
};

StudySummary summarize(const std::vector<ReplicationResult>& results);

}  // namespace ctwfe
