#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ctwfe {

/// Balanced long panel stored wide: one column per unit, one row per period,
/// so a unit's whole series is contiguous.
///
/// `treatment[i]` is the period in which unit i is first treated, or nullopt
/// for a never-treated unit. Treatment is absorbing (staggered adoption).
///
/// Periods are calendar periods as read; `reindex_times` shifts them so that
/// the earliest treatment falls on period 0. `calendar_offset` always maps the
/// stored periods back to calendar time.
struct PanelData {
    std::vector<std::string> units;
    std::vector<int> periods;
    Eigen::MatrixXd outcome;                  // periods x units
    std::vector<Eigen::MatrixXd> covariates;  // one periods x units matrix per covariate
    std::vector<std::string> covariate_names;
    std::vector<std::optional<int>> treatment;
    int calendar_offset = 0;

    std::size_t unit_count() const { return units.size(); }
    std::size_t period_count() const { return periods.size(); }
    std::size_t covariate_count() const { return covariates.size(); }

    /// Row of `period` in the outcome matrix, or nullopt if it is not observed.
    std::optional<std::size_t> period_row(int period) const;

    /// T0: number of pre-treatment periods minus one. Only meaningful after reindexing.
    int pre_periods() const { return -periods.front() - 1; }
    /// T1: number of periods in which some unit is treated. Only meaningful after reindexing.
    int post_periods() const { return periods.back() + 1; }
    /// Whether the earliest treatment sits at period 0.
    bool is_reindexed() const;
};

/// Relative treatment time r = t - E_i; nullopt for never-treated units.
std::optional<int> relative_time(const PanelData& panel, std::size_t unit, int period);

/// Latent type labels k_i in {1..K}. Labels outside the range are rejected at
/// construction; surjectivity (every type used) is checked separately because
/// the reassignment step can legitimately produce an emptied type.
class TypeAssignment {
public:
    TypeAssignment() = default;
    TypeAssignment(std::vector<int> labels, int types);

    int types() const { return types_; }
    std::size_t size() const { return labels_.size(); }
    int operator[](std::size_t unit) const { return labels_[unit]; }
    const std::vector<int>& labels() const { return labels_; }

    /// Units per type, indexed 0..K-1 for types 1..K.
    std::vector<std::size_t> type_sizes() const;
    /// Every type has at least one unit.
    bool covers_all_types() const;

    friend bool operator==(const TypeAssignment&, const TypeAssignment&) = default;

private:
    std::vector<int> labels_;
    int types_ = 0;
};

enum class ViolationKind {
    EmptyPanel,
    ShapeMismatch,
    DuplicateUnit,
    PeriodGap,
    MissingCell,
    TreatmentOutOfRange,
    NoTreatmentVariation,
};

const char* to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string message;
    std::optional<std::string> unit;
    std::optional<int> period;  // calendar period
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

/// Lists every violated structural requirement. Never throws.
ValidationReport validate(const PanelData& panel);

/// Shifts the period axis so the earliest treatment lands on period 0.
/// Throws DataError when nothing is treated or when the earliest treatment
/// falls in the first observed period (no pre-treatment period).
/// Idempotent.
PanelData reindex_times(const PanelData& panel);

}  // namespace ctwfe
