#include "ctwfe/error.hpp"
#include "ctwfe/transform.hpp"

#include "fixtures.hpp"

#include <doctest.h>

using namespace ctwfe;
using fixtures::panel_from_rows;

namespace {

Eigen::VectorXd row_of(const DifferencedPanel& d, Eigen::Index unit) { return d.outcome.col(unit); }

}  // namespace

TEST_CASE("first difference examples") {
    const auto p = panel_from_rows({{3.0, 5.0, 4.0}, {7.0, 7.0, 7.0}, {10.0, 11.0, 12.0}, {-4.0, -3.0, -2.0}}, -2,
                                   {0, std::nullopt, std::nullopt, std::nullopt});
    const auto d = first_difference(fixtures::shared(p));
    CHECK(d.row_count() == 2);
    CHECK(d.periods == std::vector<int>{-1, 0});
    CHECK(row_of(d, 0)(0) == 2.0);
    CHECK(row_of(d, 0)(1) == -1.0);
    CHECK(row_of(d, 1).isZero(0.0));
    // alpha_i + t differences to 1 whatever alpha_i is
    CHECK((row_of(d, 2).array() == 1.0).all());
    CHECK((row_of(d, 3).array() == 1.0).all());
}

TEST_CASE("mean difference examples") {
    const auto p = panel_from_rows({{1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}}, -2, {0, std::nullopt});
    const auto d = mean_difference(fixtures::shared(p));
    CHECK(d.row_count() == 3);
    CHECK(d.periods == std::vector<int>{-2, -1, 0});
    CHECK(row_of(d, 0)(0) == doctest::Approx(-1.0));
    CHECK(row_of(d, 0)(1) == doctest::Approx(0.0));
    CHECK(row_of(d, 0)(2) == doctest::Approx(1.0));
    CHECK(row_of(d, 1).isZero(0.0));
}

TEST_CASE("single-period panel cannot be first differenced") {
    const auto p = panel_from_rows({{1.0}, {2.0}}, 0, {0, std::nullopt});
    CHECK_THROWS_AS(first_difference(fixtures::shared(p)), DataError);
}

TEST_CASE("mode names round trip") {
    for (auto mode : {Differencing::FirstDiff, Differencing::MeanDiff}) CHECK(parse_differencing(to_string(mode)) == mode);
    CHECK_THROWS_AS(parse_differencing("second-diff"), DataError);
}

TEST_CASE("covariates are transformed like the outcome") {
    auto p = fixtures::random_panel(5, 3, 3, 2, 7);
    for (auto mode : {Differencing::FirstDiff, Differencing::MeanDiff}) {
        auto q = p;
        q.outcome = q.covariates[1];
        const auto dp = difference(p, mode);
        const auto dq = difference(q, mode);
        CHECK(dp.covariates[1] == dq.outcome);
    }
}

TEST_CASE("adding a unit constant leaves both transforms unchanged") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto p = fixtures::random_panel(6, 4, 5, 1, seed);
        // powers of two keep the shift exact in floating point
        auto q = p;
        for (Eigen::Index i = 0; i < q.outcome.cols(); ++i) q.outcome.col(i).array() += static_cast<double>(1 << (i % 4));
        for (auto mode : {Differencing::FirstDiff, Differencing::MeanDiff}) {
            const auto a = difference(p, mode);
            const auto b = difference(q, mode);
            CHECK((a.outcome - b.outcome).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + p.outcome.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("integer-valued shift is bit-identical under first differencing") {
    auto p = panel_from_rows({{1.0, 4.0, 9.0, 16.0}}, -1, {0});
    auto q = p;
    q.outcome.array() += 1000.0;
    CHECK(first_difference(fixtures::shared(p)).outcome == first_difference(fixtures::shared(q)).outcome);
}

TEST_CASE("mean-differenced rows have zero mean") {
    const auto p = fixtures::random_panel(20, 5, 6, 0, 3);
    const auto d = mean_difference(fixtures::shared(p));
    for (Eigen::Index i = 0; i < d.outcome.cols(); ++i)
        CHECK(std::abs(d.outcome.col(i).mean()) <= 1e-12 * (1.0 + p.outcome.col(i).cwiseAbs().maxCoeff()));
}

TEST_CASE("cumulative sum of first differences rebuilds the series") {
    const auto p = fixtures::random_panel(4, 3, 3, 0, 11);
    const auto d = first_difference(fixtures::shared(p));
    for (Eigen::Index i = 0; i < p.outcome.cols(); ++i) {
        double level = p.outcome(0, i);
        for (Eigen::Index s = 0; s < d.outcome.rows(); ++s) {
            level += d.outcome(s, i);
            CHECK(level == doctest::Approx(p.outcome(s + 1, i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("step profile separates under mean differencing but not first differencing") {
    // two mirrored step profiles: -1.2 then +1.2, and the reverse
    const int T = 20;
    std::vector<double> up(T + 1), down(T + 1);
    for (int s = 0; s <= T; ++s) {
        up[static_cast<std::size_t>(s)] = s <= T / 2 ? -1.2 : 1.2;
        down[static_cast<std::size_t>(s)] = -up[static_cast<std::size_t>(s)];
    }
    const auto p = panel_from_rows({up, down}, -5, {0, std::nullopt});
    const auto fd = first_difference(fixtures::shared(p));
    const auto md = mean_difference(fixtures::shared(p));

    const Eigen::VectorXd fd_gap = fd.outcome.col(0) - fd.outcome.col(1);
    const Eigen::VectorXd md_gap = md.outcome.col(0) - md.outcome.col(1);
    int nonzero = 0;
    for (Eigen::Index s = 0; s < fd_gap.size(); ++s) nonzero += fd_gap(s) != 0.0;
    CHECK(nonzero == 1);

    const double fd_sep = fd_gap.squaredNorm() / fd_gap.size();
    const double md_sep = md_gap.squaredNorm() / md_gap.size();
    // one jump of 4.8 spread over 20 periods against a gap near 2.4 in every period
    CHECK(fd_sep == doctest::Approx(4.8 * 4.8 / 20));
    CHECK(md_sep > 4.0 * fd_sep);
    CHECK(md_sep == doctest::Approx(2.4 * 2.4 * (1.0 - 1.0 / 441.0)));
}
