#pragma once

#include "ctwfe/design.hpp"
#include "ctwfe/panel.hpp"
#include "ctwfe/transform.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ctwfe {

struct FitConfig {
    DesignSpec spec;
    int restarts = 50;
    int max_iterations = 100;
    std::uint64_t seed = 0;
    /// Stop a restart once an iteration improves the objective by less than this.
    /// At 0 a restart stops only when the assignment stops changing.
    double tolerance = 0.0;
    /// Worker threads for restarts; 0 uses the hardware concurrency.
    unsigned threads = 0;

    void check() const;
};

/// Coefficients for every column of the notional layout. Columns not
/// estimated in the latest regression keep the value they last had (0 before
/// their first estimate), which is what the reassignment step reads.
struct Estimates {
    ColumnLayout layout;
    Eigen::VectorXd values;
    std::vector<bool> estimated;

    explicit Estimates(ColumnLayout layout_ = {});

    double operator[](std::size_t column) const { return values(static_cast<Eigen::Index>(column)); }
    /// Fitted transformed outcome of `unit` if it were of `type`.
    Eigen::VectorXd fitted(const DifferencedPanel& panel, std::size_t unit, int type) const;
};

struct IterationRecord {
    double objective;     // after the regression step
    std::size_t changed;  // units reassigned by the step that followed
};

enum class RestartStatus {
    Converged,       // reassignment left every unit in place
    ToleranceMet,    // improvement fell below the configured tolerance
    IterationLimit,
    Degenerate,      // reassignment emptied a type; last valid state kept
    Cycled,          // reassignment revisited an earlier assignment
    Stalled,         // regression step rose by rounding error; previous state kept
};

const char* to_string(RestartStatus status);

struct RestartSummary {
    std::size_t restart = 0;
    double objective = 0.0;
    RestartStatus status = RestartStatus::Converged;
    std::vector<IterationRecord> trace;

    int iterations() const { return static_cast<int>(trace.size()); }
    bool degenerate() const { return status == RestartStatus::Degenerate; }
};

struct FitResult {
    TypeAssignment assignment;
    Estimates estimates;
    double objective = 0.0;
    std::vector<IterationRecord> trace;  // of the selected restart
    std::size_t selected_restart = 0;
    std::vector<RestartSummary> restarts;
    // diagnostics of the design at the final assignment
    std::vector<DroppedColumn> dropped;
    std::vector<Column> rank_dropped;
    std::vector<std::string> warnings;
};

/// Mean squared residual over all N x rows cells.
double objective(const DifferencedPanel& panel, const TypeAssignment& assignment, const Estimates& estimates);

/// Residual sum of squares of one unit under a candidate type.
double unit_rss(const DifferencedPanel& panel, const Estimates& estimates, std::size_t unit, int type);

/// Moves every unit to the type with the smallest residual sum of squares;
/// ties go to the lowest type index.
TypeAssignment assign_types(const DifferencedPanel& panel, const Estimates& estimates);

/// Seeded starting assignment for one restart. Each unit's draw is keyed by
/// its identifier, so reordering the panel does not change who gets what.
/// The first K units in draw order get types 1..K, so no type starts empty.
TypeAssignment initial_assignment(const PanelData& panel, int types, std::uint64_t seed, std::size_t restart);

/// One run of the alternating regression / reassignment iteration.
FitResult fit_once(const DifferencedPanel& panel, const TypeAssignment& init, const FitConfig& config);

/// Best of `config.restarts` seeded runs, canonicalized. Deterministic in the
/// seed regardless of thread count.
FitResult fit(const DifferencedPanel& panel, const FitConfig& config);

/// Applies a type relabelling: old type k becomes `new_label[k - 1]`.
FitResult relabel(const FitResult& result, const std::vector<int>& new_label);

/// Orders types by the mean of their pre-treatment (t < 0) time-effect
/// coefficients, smallest first; equal keys keep the original order.
FitResult canonicalize(const FitResult& result);

/// Rebuilds the final design to fill dropped-column and warning diagnostics.
void attach_diagnostics(const DifferencedPanel& panel, FitResult& result);

}  // namespace ctwfe
