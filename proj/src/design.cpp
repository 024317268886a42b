#include "ctwfe/design.hpp"

#include "ctwfe/error.hpp"

#include <set>

namespace ctwfe {

void DesignSpec::check(int pre_periods, int post_periods) const {
    if (types < 1) throw DataError("K must be at least 1", "K");
    if (lead_window < 0) throw DataError("lead window must be non-negative", "lead_window");
    if (lead_window > pre_periods)
        throw DataError("lead window " + std::to_string(lead_window) + " exceeds the " + std::to_string(pre_periods) +
                            " available pre-treatment periods",
                        "lead_window");
    if (lag_bin) {
        if (*lag_bin < 0) throw DataError("lag bin must be non-negative", "lag_bin");
        if (*lag_bin > post_periods - 1)
            throw DataError("lag bin " + std::to_string(*lag_bin) + " exceeds the last observable lag " +
                                std::to_string(post_periods - 1),
                            "lag_bin");
    }
}

std::string Column::name() const {
    const std::string k = type == 0 ? "[shared]" : "[k=" + std::to_string(type) + "]";
    switch (kind) {
        case ColumnKind::TimeEffect: return "timefe" + k + "[t=" + std::to_string(index) + "]";
        case ColumnKind::Treatment: return "treat" + k + "[r=" + std::to_string(index) + "]";
        case ColumnKind::TreatmentBin: return "treat" + k + "[r>=" + std::to_string(index) + "]";
        case ColumnKind::Covariate:
            return type == 0 ? "x[p=" + std::to_string(index) + "]"
                             : "x[k=" + std::to_string(type) + "][p=" + std::to_string(index) + "]";
    }
    return {};
}

ColumnLayout::ColumnLayout(const DifferencedPanel& panel, const DesignSpec& spec) : spec_(spec), periods_(panel.periods) {
    if (spec_.mode != panel.mode)
        throw DataError("design spec differencing mode does not match the transformed panel", "mode");
    if (periods_.empty()) throw DataError("transformed panel has no periods");
    spec_.check(panel.pre_periods(), panel.post_periods());

    const int K = spec_.types;
    const int l = spec_.lead_window;
    last_lag_ = spec_.lag_bin ? *spec_.lag_bin : panel.post_periods() - 1;

    for (int k = 1; k <= K; ++k)
        for (int t : periods_) columns_.push_back({ColumnKind::TimeEffect, k, t});

    shared_lead_offset_ = columns_.size();
    if (spec_.shared_leads)
        for (int r = -l; r <= -2; ++r) columns_.push_back({ColumnKind::Treatment, 0, r});

    lead_offset_.resize(static_cast<std::size_t>(K));
    lag_offset_.resize(static_cast<std::size_t>(K));
    bin_index_.assign(static_cast<std::size_t>(K), 0);
    for (int k = 1; k <= K; ++k) {
        const auto kk = static_cast<std::size_t>(k - 1);
        lead_offset_[kk] = columns_.size();
        if (!spec_.shared_leads)
            for (int r = -l; r <= -2; ++r) columns_.push_back({ColumnKind::Treatment, k, r});
        lag_offset_[kk] = columns_.size();
        for (int r = 0; r <= last_lag_; ++r) columns_.push_back({ColumnKind::Treatment, k, r});
        if (spec_.lag_bin) {
            bin_index_[kk] = columns_.size();
            columns_.push_back({ColumnKind::TreatmentBin, k, *spec_.lag_bin + 1});
        }
    }

    covariate_offset_ = columns_.size();
    covariate_count_ = panel.covariate_count();
    if (spec_.type_specific_slopes) {
        for (int k = 1; k <= K; ++k)
            for (std::size_t p = 0; p < covariate_count_; ++p)
                columns_.push_back({ColumnKind::Covariate, k, static_cast<int>(p)});
    } else {
        for (std::size_t p = 0; p < covariate_count_; ++p)
            columns_.push_back({ColumnKind::Covariate, 0, static_cast<int>(p)});
    }
}

std::size_t ColumnLayout::time_effect(int type, int period) const {
    return static_cast<std::size_t>(type - 1) * periods_.size() + static_cast<std::size_t>(period - periods_.front());
}

std::optional<std::size_t> ColumnLayout::treatment(int type, int r) const {
    const int l = spec_.lead_window;
    const auto kk = static_cast<std::size_t>(type - 1);
    if (r <= -2 && r >= -l) {
        const auto offset = static_cast<std::size_t>(r + l);
        return spec_.shared_leads ? shared_lead_offset_ + offset : lead_offset_[kk] + offset;
    }
    if (r < 0) return std::nullopt;
    if (spec_.lag_bin && r > *spec_.lag_bin) return bin_index_[kk];
    if (r > last_lag_) return std::nullopt;
    return lag_offset_[kk] + static_cast<std::size_t>(r);
}

std::size_t ColumnLayout::covariate(int type, int p) const {
    const auto pp = static_cast<std::size_t>(p);
    if (!spec_.type_specific_slopes) return covariate_offset_ + pp;
    return covariate_offset_ + static_cast<std::size_t>(type - 1) * covariate_count_ + pp;
}

void ColumnLayout::fill_unit(const DifferencedPanel& panel, std::size_t unit, int type,
                             Eigen::Ref<Eigen::MatrixXd> block) const {
    const auto rows = static_cast<Eigen::Index>(periods_.size());
    block.setZero();
    const auto& e = panel.treatment(unit);
    const auto ui = static_cast<Eigen::Index>(unit);

    // treatment columns touched by this unit, for within-unit demeaning
    std::vector<std::size_t> treat_touched;

    const auto fe_first = time_effect(type, periods_.front());
    for (Eigen::Index row = 0; row < rows; ++row) {
        block(row, static_cast<Eigen::Index>(fe_first) + row) = 1.0;
        if (!e) continue;
        const int r = periods_[static_cast<std::size_t>(row)] - *e;
        if (auto col = treatment(type, r)) {
            block(row, static_cast<Eigen::Index>(*col)) = 1.0;
            if (spec_.mode == Differencing::MeanDiff &&
                (treat_touched.empty() || treat_touched.back() != *col))
                treat_touched.push_back(*col);
        }
    }
    for (std::size_t p = 0; p < covariate_count_; ++p) {
        const auto col = static_cast<Eigen::Index>(covariate(type, static_cast<int>(p)));
        block.col(col) = panel.covariates[p].col(ui);
    }

    if (spec_.mode == Differencing::MeanDiff) {
        const double inv = 1.0 / static_cast<double>(rows);
        block.middleCols(static_cast<Eigen::Index>(fe_first), rows).array() -= inv;
        // a bin column is touched on consecutive rows, so duplicates are adjacent
        for (std::size_t c : treat_touched) {
            auto column = block.col(static_cast<Eigen::Index>(c));
            column.array() -= column.mean();
        }
    }
}

std::vector<std::size_t> ColumnLayout::type_permutation(const std::vector<int>& new_label) const {
    std::vector<std::size_t> target(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        const Column& c = columns_[j];
        if (c.type == 0) {
            target[j] = j;
            continue;
        }
        const int k = new_label.at(static_cast<std::size_t>(c.type - 1));
        switch (c.kind) {
            case ColumnKind::TimeEffect: target[j] = time_effect(k, c.index); break;
            case ColumnKind::Treatment: target[j] = *treatment(k, c.index); break;
            case ColumnKind::TreatmentBin: target[j] = bin_index_[static_cast<std::size_t>(k - 1)]; break;
            case ColumnKind::Covariate: target[j] = covariate(k, c.index); break;
        }
    }
    return target;
}

DesignMatrix build_design(const DifferencedPanel& panel, const TypeAssignment& assignment, const DesignSpec& spec) {
    const std::size_t N = panel.unit_count();
    if (N == 0) throw DataError("cannot build a design for an empty panel");
    if (assignment.size() != N)
        throw DataError("type assignment covers " + std::to_string(assignment.size()) + " units, panel has " +
                        std::to_string(N));
    if (assignment.types() != spec.types)
        throw DataError("type assignment has K=" + std::to_string(assignment.types()) + " but the design spec has K=" +
                        std::to_string(spec.types));
    const auto sizes = assignment.type_sizes();
    for (std::size_t k = 0; k < sizes.size(); ++k)
        if (sizes[k] == 0) throw DataError("type " + std::to_string(k + 1) + " has no units");

    DesignMatrix design;
    design.layout = ColumnLayout(panel, spec);
    const auto& layout = design.layout;
    const auto R = static_cast<Eigen::Index>(panel.row_count());
    const auto m = static_cast<Eigen::Index>(layout.size());

    Eigen::MatrixXd full(R * static_cast<Eigen::Index>(N), m);
    design.rows.reserve(static_cast<std::size_t>(full.rows()));
    for (std::size_t i = 0; i < N; ++i) {
        const int k = assignment[i];
        layout.fill_unit(panel, i, k, full.middleRows(static_cast<Eigen::Index>(i) * R, R));
        for (int t : panel.periods) design.rows.push_back({i, t, k});
    }

    std::vector<bool> normalization(layout.size(), false);
    if (spec.mode == Differencing::MeanDiff)
        for (int k = 1; k <= spec.types; ++k) normalization[layout.time_effect(k, panel.periods.front())] = true;

    for (std::size_t j = 0; j < layout.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (normalization[j]) {
            design.dropped.push_back({layout.columns()[j], "normalization"});
        } else if ((full.col(jj).array() == 0.0).all()) {
            design.dropped.push_back({layout.columns()[j], "empty"});
        } else {
            design.kept.push_back(j);
            design.columns.push_back(layout.columns()[j]);
        }
    }
    design.values.resize(full.rows(), static_cast<Eigen::Index>(design.kept.size()));
    for (std::size_t j = 0; j < design.kept.size(); ++j)
        design.values.col(static_cast<Eigen::Index>(j)) = full.col(static_cast<Eigen::Index>(design.kept[j]));

    for (int k = 1; k <= spec.types; ++k) {
        std::set<int> timings;
        for (std::size_t i = 0; i < N; ++i)
            if (assignment[i] == k && panel.treatment(i)) timings.insert(*panel.treatment(i));
        if (timings.size() < 2) {
            design.warnings.push_back("type " + std::to_string(k) + " has " + std::to_string(timings.size()) +
                                      " treatment timing(s); its treatment effects are not separately identified "
                                      "from its time effects (at least two timings are needed)");
        }
    }
    return design;
}

Eigen::VectorXd stacked_outcome(const DifferencedPanel& panel) {
    return Eigen::Map<const Eigen::VectorXd>(panel.outcome.data(), panel.outcome.size());
}

std::vector<ColumnPopulation> column_population(const DesignMatrix& design) {
    std::vector<ColumnPopulation> out;
    out.reserve(design.columns.size());
    for (std::size_t j = 0; j < design.columns.size(); ++j) {
        const auto count = (design.values.col(static_cast<Eigen::Index>(j)).array() != 0.0).count();
        out.push_back({design.columns[j], static_cast<std::size_t>(count)});
    }
    return out;
}

}  // namespace ctwfe
