#pragma once

#include "ctwfe/design.hpp"
#include "ctwfe/estimator.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace ctwfe {

/// Cluster-robust sandwich over the columns that were actually estimated.
/// No small-sample correction is applied.
struct CovarianceEstimate {
    std::vector<std::size_t> layout_index;  // layout column of each row/col of vcov
    std::vector<Column> columns;
    Eigen::MatrixXd bread;  // (X'X)^-1
    Eigen::MatrixXd meat;   // sum over clusters of X_g' u_g u_g' X_g
    Eigen::MatrixXd vcov;
    std::size_t clusters = 0;

    /// Position of a layout column in vcov, if it was estimated.
    std::optional<Eigen::Index> position(std::size_t layout_column) const;
    double standard_error(std::size_t layout_column) const;
};

/// Sandwich for a plain regression. `clusters[i]` is the cluster id of row i.
CovarianceEstimate cluster_robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                       const std::vector<std::size_t>& clusters);

/// Sandwich for an event-study design, clustered by unit. Columns listed in
/// `exclude` (design positions, e.g. rank-dropped ones) are left out.
CovarianceEstimate cluster_robust_vcov(const DesignMatrix& design, const Eigen::VectorXd& residuals,
                                       const std::vector<Eigen::Index>& exclude = {});

/// Rebuilds the design at the fitted assignment and returns the clustered
/// sandwich for the final regression. Classification error is ignored.
CovarianceEstimate fit_vcov(const DifferencedPanel& panel, const FitResult& result);

/// Partial sums of `coefficients` and their standard errors sqrt(1'V1).
struct CumulativeSeries {
    Eigen::VectorXd sums;
    Eigen::VectorXd standard_errors;
};

CumulativeSeries cumulate(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& vcov);

struct EffectRow {
    int type = 0;  // 0 for shared leads
    int r = 0;     // relative time; first binned lag for bin rows
    bool bin = false;
    std::optional<double> differenced;  // the regression coefficient
    std::optional<double> cumulative;   // level effect beta_r(k)
    std::optional<double> se;           // of `cumulative`, or of `differenced` when there is no level
    std::string note;
};

struct TimeEffectRow {
    int type;
    int period;
    double level;
};

/// Reconstructed effects. Under first differencing the lag levels are partial
/// sums of the differenced coefficients from r = 0, truncated at the first
/// lag without an estimate; leads and the lag bin carry their coefficient as
/// estimated. Under mean differencing every coefficient is already a level.
struct EffectReport {
    Differencing mode = Differencing::FirstDiff;
    std::vector<EffectRow> effects;
    std::vector<TimeEffectRow> time_effects;

    const EffectRow* find(int type, int r, bool bin = false) const;
};

EffectReport cumulative_effects(const Estimates& estimates, const CovarianceEstimate& vcov);

struct HetEffect {
    double estimate;
    double standard_error;  // NaN when a group has a single unit
    std::size_t treated;    // units with E_i = 0
    std::size_t comparison;
};

/// Within type k, mean of Y_i0 - Y_i,-1 for units first treated at 0 minus
/// the same mean for units treated later. Never-treated units join the later
/// group unless excluded. Requires a reindexed panel.
HetEffect het_effect_r0(const PanelData& panel, const TypeAssignment& assignment, int type,
                        bool include_never_treated = true);

struct BalanceVariable {
    std::string name;
    Eigen::VectorXd values;  // one per unit
};

/// Per-unit pre-treatment (t < 0) means of the outcome and each covariate.
std::vector<BalanceVariable> pretreatment_means(const PanelData& panel);

struct BalanceRow {
    std::string variable;
    int type_a, type_b;
    double mean_a, sd_a, mean_b, sd_b;
    double difference;  // mean_a - mean_b
    double se;
};

struct BalanceJoint {
    int type_a, type_b;
    std::size_t n_a, n_b;
    double statistic;
    int df;
    double p_value;
    std::vector<std::string> notes;
};

struct BalanceReport {
    std::vector<BalanceRow> rows;
    std::vector<BalanceJoint> joint;
};

/// Compares variable means between every pair of types. The joint test is a
/// Wald statistic on the vector of mean differences, with covariance
/// S_a/n_a + S_b/n_b, referred to a chi-square with one df per variable.
/// Variables constant within both groups are left out of the joint test.
BalanceReport balancedness_test(const TypeAssignment& assignment, const std::vector<BalanceVariable>& variables);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, int df);

}  // namespace ctwfe
