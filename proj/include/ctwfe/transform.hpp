#pragma once

#include "ctwfe/panel.hpp"

#include <memory>
#include <string_view>

namespace ctwfe {

/// How unit fixed-effects are removed before estimation.
enum class Differencing {
    FirstDiff,  // Y_it - Y_i,t-1; sequential exogeneity suffices
    MeanDiff,   // Y_it - mean_t Y_it; needs strict exogeneity
};

const char* to_string(Differencing mode);
Differencing parse_differencing(std::string_view text);

/// Panel with unit fixed-effects removed. Rows are periods, columns units.
/// FirstDiff drops the first period (T rows); MeanDiff keeps all T+1.
struct DifferencedPanel {
    Differencing mode = Differencing::FirstDiff;
    std::vector<int> periods;  // period label of each row
    Eigen::MatrixXd outcome;
    std::vector<Eigen::MatrixXd> covariates;
    std::shared_ptr<const PanelData> source;

    std::size_t unit_count() const { return static_cast<std::size_t>(outcome.cols()); }
    std::size_t row_count() const { return static_cast<std::size_t>(outcome.rows()); }
    std::size_t covariate_count() const { return covariates.size(); }
    const std::optional<int>& treatment(std::size_t unit) const { return source->treatment[unit]; }
    int pre_periods() const { return source->pre_periods(); }
    int post_periods() const { return source->post_periods(); }
};

DifferencedPanel first_difference(std::shared_ptr<const PanelData> panel);
DifferencedPanel mean_difference(std::shared_ptr<const PanelData> panel);
DifferencedPanel difference(std::shared_ptr<const PanelData> panel, Differencing mode);

inline DifferencedPanel difference(const PanelData& panel, Differencing mode) {
    return difference(std::make_shared<const PanelData>(panel), mode);
}

}  // namespace ctwfe
