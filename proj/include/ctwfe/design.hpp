#pragma once

#include "ctwfe/panel.hpp"
#include "ctwfe/transform.hpp"

#include <compare>
#include <optional>
#include <string>
#include <vector>

namespace ctwfe {

/// Regression layout for the conditional event-study model.
struct DesignSpec {
    int types = 1;                       // K
    int lead_window = 0;                 // l: leads r = -l..-2 get coefficients, r = -1 is the reference
    std::optional<int> lag_bin;          // L: lags r > L share one column 1{t >= E_i + L + 1}
    bool shared_leads = false;           // one set of lead coefficients for all types
    bool type_specific_slopes = false;   // covariate slopes theta(k)
    Differencing mode = Differencing::FirstDiff;

    /// Throws DataError if the spec does not fit a panel with these T0, T1.
    void check(int pre_periods, int post_periods) const;
};

enum class ColumnKind { TimeEffect, Treatment, TreatmentBin, Covariate };

/// One regressor. `type` is 1..K, or 0 for columns shared across types.
/// `index` is the period (TimeEffect), relative time (Treatment), first
/// binned relative time (TreatmentBin) or covariate position (Covariate).
struct Column {
    ColumnKind kind = ColumnKind::TimeEffect;
    int type = 0;
    int index = 0;

    /// Stable name, e.g. `timefe[k=2][t=-3]`, `treat[shared][r=-2]`, `treat[k=1][r>=8]`, `x[k=2][p=0]`.
    std::string name() const;

    friend auto operator<=>(const Column&, const Column&) = default;
};

/// The notional full column set for a panel and spec, in the fixed order
/// TimeEffect by (k, t), then Treatment/TreatmentBin by (k, r) with shared
/// leads first, then Covariate by (k, p).
class ColumnLayout {
public:
    ColumnLayout() = default;
    ColumnLayout(const DifferencedPanel& panel, const DesignSpec& spec);

    const std::vector<Column>& columns() const { return columns_; }
    std::size_t size() const { return columns_.size(); }
    const DesignSpec& spec() const { return spec_; }
    const std::vector<int>& periods() const { return periods_; }

    std::size_t time_effect(int type, int period) const;
    /// Column that carries relative time r for a unit of `type`; nullopt when
    /// r is the reference (-1) or an excluded early lead.
    std::optional<std::size_t> treatment(int type, int r) const;
    std::size_t covariate(int type, int p) const;

    /// Largest un-binned lag.
    int last_lag() const { return last_lag_; }

    /// Writes the regressor rows of `unit` as if it were of `type` into `block`
    /// (rows = panel.row_count(), cols = size()). Under MeanDiff the indicator
    /// columns are demeaned within the unit.
    void fill_unit(const DifferencedPanel& panel, std::size_t unit, int type, Eigen::Ref<Eigen::MatrixXd> block) const;

    /// Column index mapping after relabelling types: new index of old column j,
    /// where old type k becomes `new_label[k - 1]`.
    std::vector<std::size_t> type_permutation(const std::vector<int>& new_label) const;

private:
    DesignSpec spec_;
    std::vector<int> periods_;
    std::vector<Column> columns_;
    int last_lag_ = 0;
    std::size_t shared_lead_offset_ = 0;
    std::vector<std::size_t> lead_offset_;  // per type
    std::vector<std::size_t> lag_offset_;   // per type
    std::vector<std::size_t> bin_index_;    // per type
    std::size_t covariate_offset_ = 0;
    std::size_t covariate_count_ = 0;
};

struct DroppedColumn {
    Column column;
    std::string reason;  // "empty" or "normalization"
};

struct DesignRow {
    std::size_t unit;
    int period;
    int type;
};

/// Regression design for one type assignment. `values` holds only the
/// surviving columns; `kept[j]` is the layout index of surviving column j.
struct DesignMatrix {
    ColumnLayout layout;
    std::vector<std::size_t> kept;
    std::vector<Column> columns;
    std::vector<DroppedColumn> dropped;
    Eigen::MatrixXd values;
    std::vector<DesignRow> rows;
    std::vector<std::string> warnings;

    std::size_t row_count() const { return rows.size(); }
    std::size_t column_count() const { return columns.size(); }
};

DesignMatrix build_design(const DifferencedPanel& panel, const TypeAssignment& assignment, const DesignSpec& spec);

/// Response vector stacked unit by unit, matching DesignMatrix row order.
Eigen::VectorXd stacked_outcome(const DifferencedPanel& panel);

struct ColumnPopulation {
    Column column;
    std::size_t rows;  // rows with a nonzero entry
};

std::vector<ColumnPopulation> column_population(const DesignMatrix& design);

}  // namespace ctwfe
