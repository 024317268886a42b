#include "ctwfe/transform.hpp"

#include "ctwfe/error.hpp"

#include <string>

namespace ctwfe {

const char* to_string(Differencing mode) {
    return mode == Differencing::FirstDiff ? "first-diff" : "mean-diff";
}

Differencing parse_differencing(std::string_view text) {
    if (text == "first-diff" || text == "first_diff" || text == "fd") return Differencing::FirstDiff;
    if (text == "mean-diff" || text == "mean_diff" || text == "md") return Differencing::MeanDiff;
    throw DataError("unknown differencing mode '" + std::string(text) + "' (expected first-diff or mean-diff)",
                    "mode");
}

namespace {

Eigen::MatrixXd diff_rows(const Eigen::MatrixXd& m) {
    const auto rows = m.rows() - 1;
    return m.bottomRows(rows) - m.topRows(rows);
}

Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    out.rowwise() -= m.colwise().mean();
    return out;
}

}  // namespace

DifferencedPanel first_difference(std::shared_ptr<const PanelData> panel) {
    if (!panel) throw DataError("null panel");
    if (panel->period_count() < 2) throw DataError("first-differencing needs at least two periods");
    DifferencedPanel out;
    out.mode = Differencing::FirstDiff;
    out.periods.assign(panel->periods.begin() + 1, panel->periods.end());
    out.outcome = diff_rows(panel->outcome);
    out.covariates.reserve(panel->covariate_count());
    for (const auto& x : panel->covariates) out.covariates.push_back(diff_rows(x));
    out.source = std::move(panel);
    return out;
}

DifferencedPanel mean_difference(std::shared_ptr<const PanelData> panel) {
    if (!panel) throw DataError("null panel");
    if (panel->period_count() < 1) throw DataError("panel has no periods");
    DifferencedPanel out;
    out.mode = Differencing::MeanDiff;
    out.periods = panel->periods;
    out.outcome = demean_columns(panel->outcome);
    out.covariates.reserve(panel->covariate_count());
    for (const auto& x : panel->covariates) out.covariates.push_back(demean_columns(x));
    out.source = std::move(panel);
    return out;
}

DifferencedPanel difference(std::shared_ptr<const PanelData> panel, Differencing mode) {
    return mode == Differencing::FirstDiff ? first_difference(std::move(panel)) : mean_difference(std::move(panel));
}

}  // namespace ctwfe
