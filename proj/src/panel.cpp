#include "ctwfe/panel.hpp"

#include "ctwfe/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ctwfe {

std::optional<std::size_t> PanelData::period_row(int period) const {
    if (periods.empty()) return std::nullopt;
    const long offset = static_cast<long>(period) - periods.front();
    if (offset < 0 || offset >= static_cast<long>(periods.size())) return std::nullopt;
    const auto row = static_cast<std::size_t>(offset);
    if (periods[row] != period) return std::nullopt;
    return row;
}

bool PanelData::is_reindexed() const {
    std::optional<int> earliest;
    for (const auto& e : treatment)
        if (e && (!earliest || *e < *earliest)) earliest = e;
    return earliest && *earliest == 0;
}

std::optional<int> relative_time(const PanelData& panel, std::size_t unit, int period) {
    const auto& e = panel.treatment.at(unit);
    if (!e) return std::nullopt;
    return period - *e;
}

TypeAssignment::TypeAssignment(std::vector<int> labels, int types)
    : labels_(std::move(labels)), types_(types) {
    if (types_ < 1) throw DataError("number of types must be at least 1", "K");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] < 1 || labels_[i] > types_)
            throw DataError("type label " + std::to_string(labels_[i]) + " of unit " + std::to_string(i) +
                            " is outside 1.." + std::to_string(types_));
    }
}

std::vector<std::size_t> TypeAssignment::type_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(types_), 0);
    for (int k : labels_) ++sizes[static_cast<std::size_t>(k - 1)];
    return sizes;
}

bool TypeAssignment::covers_all_types() const {
    const auto sizes = type_sizes();
    return std::all_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n > 0; });
}

const char* to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::EmptyPanel: return "empty_panel";
        case ViolationKind::ShapeMismatch: return "shape_mismatch";
        case ViolationKind::DuplicateUnit: return "duplicate_unit";
        case ViolationKind::PeriodGap: return "period_gap";
        case ViolationKind::MissingCell: return "missing_cell";
        case ViolationKind::TreatmentOutOfRange: return "treatment_out_of_range";
        case ViolationKind::NoTreatmentVariation: return "no_treatment_variation";
    }
    return "unknown";
}

ValidationReport validate(const PanelData& panel) {
    ValidationReport report;
    auto add = [&](ViolationKind kind, std::string message, std::optional<std::string> unit = {},
                   std::optional<int> period = {}) {
        report.violations.push_back({kind, std::move(message), std::move(unit), period});
    };

    const auto n_units = panel.unit_count();
    const auto n_periods = panel.period_count();
    if (n_units == 0 || n_periods == 0) {
        add(ViolationKind::EmptyPanel, "panel has no units or no periods");
        return report;
    }

    const auto rows = static_cast<Eigen::Index>(n_periods);
    const auto cols = static_cast<Eigen::Index>(n_units);
    bool shape_ok = panel.outcome.rows() == rows && panel.outcome.cols() == cols &&
                    panel.treatment.size() == n_units &&
                    panel.covariate_names.size() == panel.covariates.size();
    for (const auto& x : panel.covariates) shape_ok = shape_ok && x.rows() == rows && x.cols() == cols;
    if (!shape_ok) {
        add(ViolationKind::ShapeMismatch, "outcome, covariate or treatment dimensions do not match units x periods");
        return report;
    }

    std::set<std::string> seen;
    for (const auto& u : panel.units)
        if (!seen.insert(u).second) add(ViolationKind::DuplicateUnit, "unit '" + u + "' appears twice", u);

    for (std::size_t r = 1; r < n_periods; ++r) {
        if (panel.periods[r] != panel.periods[r - 1] + 1) {
            add(ViolationKind::PeriodGap,
                "periods " + std::to_string(panel.periods[r - 1] + panel.calendar_offset) + " and " +
                    std::to_string(panel.periods[r] + panel.calendar_offset) + " are not consecutive",
                std::nullopt, panel.periods[r] + panel.calendar_offset);
        }
    }

    for (std::size_t i = 0; i < n_units; ++i) {
        for (std::size_t r = 0; r < n_periods; ++r) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto rr = static_cast<Eigen::Index>(r);
            const int calendar = panel.periods[r] + panel.calendar_offset;
            if (!std::isfinite(panel.outcome(rr, ii))) {
                add(ViolationKind::MissingCell,
                    "outcome missing for unit '" + panel.units[i] + "' in period " + std::to_string(calendar),
                    panel.units[i], calendar);
            }
            for (std::size_t p = 0; p < panel.covariate_count(); ++p) {
                if (!std::isfinite(panel.covariates[p](rr, ii))) {
                    add(ViolationKind::MissingCell,
                        "covariate '" + panel.covariate_names[p] + "' missing for unit '" + panel.units[i] +
                            "' in period " + std::to_string(calendar),
                        panel.units[i], calendar);
                }
            }
        }
    }

    bool any_treated = false;
    for (std::size_t i = 0; i < n_units; ++i) {
        const auto& e = panel.treatment[i];
        if (!e) continue;
        any_treated = true;
        if (*e < panel.periods.front() || *e > panel.periods.back()) {
            add(ViolationKind::TreatmentOutOfRange,
                "treatment period " + std::to_string(*e + panel.calendar_offset) + " of unit '" + panel.units[i] +
                    "' lies outside the observed periods",
                panel.units[i], *e + panel.calendar_offset);
        }
    }
    if (!any_treated) add(ViolationKind::NoTreatmentVariation, "no treatment variation: every unit is never-treated");
    return report;
}

PanelData reindex_times(const PanelData& panel) {
    if (panel.periods.empty()) throw DataError("panel has no periods");
    std::optional<int> earliest;
    for (const auto& e : panel.treatment)
        if (e && (!earliest || *e < *earliest)) earliest = e;
    if (!earliest) throw DataError("no treated unit: cannot locate the first treatment period");
    if (*earliest <= panel.periods.front())
        throw DataError("earliest treatment occurs in the first observed period; at least one pre-treatment period "
                        "is required");

    PanelData out = panel;
    const int shift = *earliest;
    for (auto& t : out.periods) t -= shift;
    for (auto& e : out.treatment)
        if (e) *e -= shift;
    out.calendar_offset += shift;
    return out;
}

}  // namespace ctwfe
