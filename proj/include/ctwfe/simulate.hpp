#pragma once

#include "ctwfe/panel.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ctwfe {

enum class ErrorProcess { Iid, MA1, AR1 };

const char* to_string(ErrorProcess process);
ErrorProcess parse_error_process(std::string_view text);

/// Distribution of first-treatment periods given the type. `probs[k-1]`
/// weights `support`; `never_treated[k-1]` is the never-treated share.
struct TimingModel {
    std::vector<int> support;
    std::vector<std::vector<double>> probs;
    std::vector<double> never_treated;
};

struct DgpSpec {
    int N = 100;
    int T0 = 9;   // periods run from -T0-1 to T1-1
    int T1 = 11;
    int K = 2;
    int p = 0;
    std::vector<double> type_probs;                  // mu(k)
    std::vector<std::vector<double>> delta;          // K rows of T+1 levels, first period first
    std::vector<std::vector<double>> beta;           // K rows of level effects for r = 0, 1, ...; last value repeats
    double unit_beta_sd = 0.0;                       // unit-level deviations beta_ir - beta_r(k)
    double beta_timing_slope = 0.0;                  // beta_ir also shifts by slope * E_i
    std::vector<std::vector<double>> theta;          // 1 row (common) or K rows of p slopes
    std::vector<std::vector<double>> covariate_mean; // empty or K rows of p means
    double alpha_sd = 1.0;
    double noise_sd = 1.0;
    TimingModel timing;
    ErrorProcess error = ErrorProcess::Iid;
    double error_coefficient = 0.0;  // MA or AR coefficient
    std::uint64_t seed = 0;

    /// Throws DataError on inconsistent dimensions or weights.
    void check() const;
    int periods() const { return T0 + T1 + 1; }
    int first_period() const { return -T0 - 1; }
    /// beta_r(k) for r >= 0, extending the profile with its last value.
    double beta_level(int type, int r) const;
};

struct Simulation {
    PanelData panel;            // periods are the model's -T0-1..T1-1; not reindexed
    TypeAssignment labels;      // true types
    Eigen::MatrixXd unit_beta;  // N x T1: effect of unit i at relative time r
    Eigen::MatrixXd expected_outcome;  // outcome without alpha_i and errors
};

/// Draws a panel from the model. Same spec, same panel, bit for bit.
Simulation generate(const DgpSpec& spec);

std::vector<std::string> preset_names();

/// Named designs for simulation studies, with T = T0 + T1 differenced periods.
/// separated-trends, step-change, weak-separation, selection-on-type,
/// heterogeneous-beta.
DgpSpec preset(std::string_view name, int N, int T, std::uint64_t seed);

/// Fraction of units whose estimated type differs from the truth, minimized
/// over relabellings of the estimate.
double misclassification_rate(const TypeAssignment& estimated, const TypeAssignment& truth);

/// Relabelling used by misclassification_rate: estimated type k corresponds
/// to true type `match[k-1]`.
std::vector<int> best_label_match(const TypeAssignment& estimated, const TypeAssignment& truth);

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

}  // namespace ctwfe
