#include "ctwfe/design.hpp"
#include "ctwfe/error.hpp"
#include "ctwfe/lsq.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace ctwfe;

namespace {

std::size_t count_kind(const DesignMatrix& d, ColumnKind kind, int type) {
    return static_cast<std::size_t>(std::count_if(d.columns.begin(), d.columns.end(), [&](const Column& c) {
        return c.kind == kind && c.type == type;
    }));
}

TypeAssignment alternating(std::size_t n, int K) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(K)) + 1;
    return TypeAssignment(labels, K);
}

}  // namespace

TEST_CASE("K=1 design has one column per period plus leads and lags") {
    const auto p = fixtures::random_panel(12, 4, 5, 0, 2);
    const auto d = first_difference(fixtures::shared(p));
    for (int l : {0, 2, 4}) {
        DesignSpec spec;
        spec.lead_window = l;
        const auto design = build_design(d, TypeAssignment(std::vector<int>(12, 1), 1), spec);
        const std::size_t T = 9;
        CHECK(count_kind(design, ColumnKind::TimeEffect, 1) == T);
        CHECK(count_kind(design, ColumnKind::Treatment, 1) == static_cast<std::size_t>(std::max(0, l - 1) + 5));
        CHECK(design.dropped.empty());
        CHECK(design.values.rows() == static_cast<Eigen::Index>(12 * T));
    }
}

TEST_CASE("binned K=1 design") {
    const auto p = fixtures::random_panel(12, 4, 6, 0, 5);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.lag_bin = 2;
    const auto design = build_design(d, TypeAssignment(std::vector<int>(12, 1), 1), spec);
    CHECK(count_kind(design, ColumnKind::Treatment, 1) == 3);
    CHECK(count_kind(design, ColumnKind::TreatmentBin, 1) == 1);
    const auto bin = std::find_if(design.columns.begin(), design.columns.end(),
                                  [](const Column& c) { return c.kind == ColumnKind::TreatmentBin; });
    CHECK(bin->name() == "treat[k=1][r>=3]");
    // the bin switches on at E + 3 and stays on
    const auto col = static_cast<Eigen::Index>(bin - design.columns.begin());
    for (std::size_t row = 0; row < design.rows.size(); ++row) {
        const auto& e = p.treatment[design.rows[row].unit];
        const double expected = e && design.rows[row].period >= *e + 3 ? 1.0 : 0.0;
        CHECK(design.values(static_cast<Eigen::Index>(row), col) == expected);
    }
}

TEST_CASE("type made only of never-treated units gets no treatment columns") {
    auto p = fixtures::random_panel(10, 3, 4, 0, 9, 0.0);
    for (std::size_t i = 5; i < 10; ++i) p.treatment[i].reset();
    const auto d = first_difference(fixtures::shared(p));
    std::vector<int> labels(10, 1);
    std::fill(labels.begin() + 5, labels.end(), 2);
    DesignSpec spec;
    spec.types = 2;
    spec.lead_window = 2;
    const auto design = build_design(d, TypeAssignment(labels, 2), spec);
    CHECK(count_kind(design, ColumnKind::TimeEffect, 2) == 7);
    CHECK(count_kind(design, ColumnKind::Treatment, 2) == 0);
    std::size_t dropped_treat = 0;
    for (const auto& dc : design.dropped) {
        CHECK(dc.reason == "empty");
        CHECK(dc.column.type == 2);
        dropped_treat += dc.column.kind == ColumnKind::Treatment;
    }
    CHECK(dropped_treat == 1 + 4);  // r=-2 and r=0..3
    CHECK(std::any_of(design.warnings.begin(), design.warnings.end(),
                      [](const std::string& w) { return w.find("type 2") != std::string::npos; }));
}

TEST_CASE("empirical configuration: five leads shared, lags binned after seven") {
    const auto p = fixtures::random_panel(60, 6, 12, 0, 4, 0.1);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.types = 2;
    spec.lead_window = 5;
    spec.shared_leads = true;
    spec.lag_bin = 7;
    const ColumnLayout layout(d, spec);
    std::vector<std::string> shared_names;
    for (const auto& c : layout.columns())
        if (c.type == 0) shared_names.push_back(c.name());
    CHECK(shared_names ==
          std::vector<std::string>{"treat[shared][r=-5]", "treat[shared][r=-4]", "treat[shared][r=-3]", "treat[shared][r=-2]"});
    for (int k = 1; k <= 2; ++k) {
        std::size_t lags = 0, bins = 0;
        for (const auto& c : layout.columns()) {
            if (c.type != k) continue;
            lags += c.kind == ColumnKind::Treatment;
            bins += c.kind == ColumnKind::TreatmentBin;
        }
        CHECK(lags == 8);
        CHECK(bins == 1);
    }
    CHECK(!layout.treatment(1, -6));
    CHECK(!layout.treatment(1, -1));
    CHECK(layout.treatment(1, 20) == layout.treatment(1, 8));
    CHECK(layout.treatment(1, -3) == layout.treatment(2, -3));
}

TEST_CASE("layout order and names") {
    const auto p = fixtures::random_panel(6, 2, 2, 1, 1);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.types = 2;
    spec.lead_window = 2;
    spec.type_specific_slopes = true;
    const ColumnLayout layout(d, spec);
    std::vector<std::string> names;
    for (const auto& c : layout.columns()) names.push_back(c.name());
    CHECK(names == std::vector<std::string>{
                       "timefe[k=1][t=-2]", "timefe[k=1][t=-1]", "timefe[k=1][t=0]", "timefe[k=1][t=1]",
                       "timefe[k=2][t=-2]", "timefe[k=2][t=-1]", "timefe[k=2][t=0]", "timefe[k=2][t=1]",
                       "treat[k=1][r=-2]", "treat[k=1][r=0]", "treat[k=1][r=1]",
                       "treat[k=2][r=-2]", "treat[k=2][r=0]", "treat[k=2][r=1]",
                       "x[k=1][p=0]", "x[k=2][p=0]"});
}

TEST_CASE("spec bounds") {
    const auto p = fixtures::random_panel(6, 2, 3, 0, 1);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.lead_window = 3;
    CHECK_THROWS_AS(ColumnLayout(d, spec), DataError);
    spec.lead_window = 2;
    spec.lag_bin = 3;
    CHECK_THROWS_AS(ColumnLayout(d, spec), DataError);
    spec.lag_bin = 2;
    CHECK_NOTHROW(ColumnLayout(d, spec));
    spec.mode = Differencing::MeanDiff;
    CHECK_THROWS_AS(ColumnLayout(d, spec), DataError);
}

TEST_CASE("empty type is an error") {
    const auto p = fixtures::random_panel(4, 2, 2, 0, 1);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.types = 2;
    CHECK_THROWS_AS(build_design(d, TypeAssignment({1, 1, 1, 1}, 2), spec), DataError);
    CHECK_THROWS_AS(build_design(d, TypeAssignment({1, 2, 1}, 2), spec), DataError);
}

TEST_CASE("no kept column is all zero and kept plus dropped partitions the layout") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const auto p = fixtures::random_panel(9, 3, 4, static_cast<int>(seed % 2), seed, 0.3);
        for (auto mode : {Differencing::FirstDiff, Differencing::MeanDiff}) {
            const auto d = difference(p, mode);
            DesignSpec spec;
            spec.types = 3;
            spec.lead_window = static_cast<int>(seed % 4);
            spec.mode = mode;
            if (seed % 3 == 0) spec.lag_bin = 1;
            spec.shared_leads = seed % 2 == 0;
            const auto design = build_design(d, alternating(9, 3), spec);
            for (Eigen::Index j = 0; j < design.values.cols(); ++j) CHECK(design.values.col(j).cwiseAbs().maxCoeff() > 0);
            std::multiset<Column> all(design.columns.begin(), design.columns.end());
            for (const auto& dc : design.dropped) all.insert(dc.column);
            const std::multiset<Column> notional(design.layout.columns().begin(), design.layout.columns().end());
            CHECK(all == notional);
            for (std::size_t j = 0; j < design.kept.size(); ++j)
                CHECK(design.layout.columns()[design.kept[j]] == design.columns[j]);
            for (const auto& c : design.columns) {
                if (c.kind != ColumnKind::Treatment) continue;
                CHECK(c.index != -1);
                CHECK(c.index >= -spec.lead_window);
            }
        }
    }
}

TEST_CASE("K=1 unbinned design equals the textbook event-study regressors") {
    const auto p = fixtures::random_panel(15, 4, 5, 2, 21);
    const auto d = first_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.lead_window = 3;
    const auto design = build_design(d, TypeAssignment(std::vector<int>(15, 1), 1), spec);
    for (std::size_t row = 0; row < design.rows.size(); ++row) {
        const auto& dr = design.rows[row];
        const auto i = static_cast<Eigen::Index>(dr.unit);
        const auto s = static_cast<Eigen::Index>(dr.period - p.periods.front());
        const auto& e = p.treatment[dr.unit];
        for (std::size_t j = 0; j < design.columns.size(); ++j) {
            const Column& c = design.columns[j];
            double expected = 0.0;
            switch (c.kind) {
                case ColumnKind::TimeEffect: expected = dr.period == c.index ? 1.0 : 0.0; break;
                case ColumnKind::Treatment: expected = e && dr.period - *e == c.index ? 1.0 : 0.0; break;
                case ColumnKind::TreatmentBin: FAIL("no bin expected"); break;
                case ColumnKind::Covariate: expected = p.covariates[static_cast<std::size_t>(c.index)](s, i) -
                                                       p.covariates[static_cast<std::size_t>(c.index)](s - 1, i);
                    break;
            }
            CHECK(design.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) == expected);
        }
    }
}

TEST_CASE("stacked outcome follows design row order") {
    const auto p = fixtures::random_panel(5, 2, 3, 0, 8);
    const auto d = first_difference(fixtures::shared(p));
    const auto design = build_design(d, TypeAssignment(std::vector<int>(5, 1), 1), DesignSpec{});
    const auto y = stacked_outcome(d);
    for (std::size_t row = 0; row < design.rows.size(); ++row) {
        const auto& dr = design.rows[row];
        CHECK(y(static_cast<Eigen::Index>(row)) == p.outcome(dr.period - p.periods.front(), static_cast<Eigen::Index>(dr.unit)) -
                                                        p.outcome(dr.period - p.periods.front() - 1, static_cast<Eigen::Index>(dr.unit)));
    }
}

TEST_CASE("mean differencing drops one time effect per type and demeans indicators") {
    const auto p = fixtures::random_panel(10, 3, 3, 0, 6);
    const auto d = mean_difference(fixtures::shared(p));
    DesignSpec spec;
    spec.types = 2;
    spec.mode = Differencing::MeanDiff;
    spec.lead_window = 2;
    const auto design = build_design(d, alternating(10, 2), spec);
    std::size_t normalization = 0;
    for (const auto& dc : design.dropped) {
        if (dc.reason != "normalization") continue;
        ++normalization;
        CHECK(dc.column.kind == ColumnKind::TimeEffect);
        CHECK(dc.column.index == p.periods.front());
    }
    CHECK(normalization == 2);
    const auto R = static_cast<Eigen::Index>(d.row_count());
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = 0; j < design.values.cols(); ++j)
            CHECK(std::abs(design.values.block(i * R, j, R, 1).sum()) < 1e-12);
}

TEST_CASE("column population counts") {
    const auto p = fixtures::random_panel(12, 3, 4, 0, 13, 0.0);
    const auto d = first_difference(fixtures::shared(p));
    SUBCASE("single-unit type") {
        std::vector<int> labels(12, 1);
        labels[0] = 2;  // unit 0 is treated at 0
        DesignSpec spec;
        spec.types = 2;
        spec.lead_window = 2;
        const auto design = build_design(d, TypeAssignment(labels, 2), spec);
        for (const auto& cp : column_population(design)) {
            if (cp.column.type == 2 && cp.column.kind == ColumnKind::Treatment) CHECK(cp.rows == 1);
            if (cp.column.type == 2 && cp.column.kind == ColumnKind::TimeEffect) CHECK(cp.rows == 1);
        }
    }
    SUBCASE("shared leads sum the type-specific counts") {
        DesignSpec spec;
        spec.types = 2;
        spec.lead_window = 3;
        const auto a = alternating(12, 2);
        const auto own = column_population(build_design(d, a, spec));
        spec.shared_leads = true;
        const auto pooled = column_population(build_design(d, a, spec));
        for (int r = -3; r <= -2; ++r) {
            std::size_t sum = 0, shared = 0;
            for (const auto& cp : own)
                if (cp.column.kind == ColumnKind::Treatment && cp.column.index == r) sum += cp.rows;
            for (const auto& cp : pooled)
                if (cp.column.type == 0 && cp.column.index == r) shared = cp.rows;
            CHECK(shared == sum);
        }
    }
}

TEST_CASE("relabelling types permutes columns and leaves fitted values unchanged") {
    const auto p = fixtures::random_panel(18, 3, 4, 1, 17, 0.1);
    for (auto mode : {Differencing::FirstDiff, Differencing::MeanDiff}) {
        const auto d = difference(p, mode);
        DesignSpec spec;
        spec.types = 3;
        spec.lead_window = 2;
        spec.mode = mode;
        const auto a = alternating(18, 3);
        const std::vector<int> perm{3, 1, 2};
        std::vector<int> relabelled(18);
        for (std::size_t i = 0; i < 18; ++i) relabelled[i] = perm[static_cast<std::size_t>(a[i] - 1)];
        const auto da = build_design(d, a, spec);
        const auto db = build_design(d, TypeAssignment(relabelled, 3), spec);
        const auto y = stacked_outcome(d);
        const auto sa = lsq::solve(da, y);
        const auto sb = lsq::solve(db, y);
        CHECK((sa.residuals - sb.residuals).cwiseAbs().maxCoeff() < 1e-9);

        const auto target = da.layout.type_permutation(perm);
        std::set<std::size_t> image(target.begin(), target.end());
        CHECK(image.size() == target.size());
        for (std::size_t j = 0; j < target.size(); ++j) {
            const Column& from = da.layout.columns()[j];
            const Column& to = da.layout.columns()[target[j]];
            CHECK(from.kind == to.kind);
            CHECK(from.index == to.index);
            if (from.type != 0) CHECK(to.type == perm[static_cast<std::size_t>(from.type - 1)]);
        }
    }
}
