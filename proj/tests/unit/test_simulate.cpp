#include "ctwfe/error.hpp"
#include "ctwfe/estimator.hpp"
#include "ctwfe/montecarlo.hpp"
#include "ctwfe/simulate.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace ctwfe;

TEST_CASE("generation is reproducible") {
    for (const auto& name : preset_names()) {
        const auto spec = preset(name, 30, 14, 42);
        const auto a = generate(spec);
        const auto b = generate(spec);
        CHECK(a.panel.outcome == b.panel.outcome);
        CHECK(a.panel.treatment == b.panel.treatment);
        CHECK(a.labels == b.labels);
        auto other = spec;
        other.seed = 43;
        CHECK(generate(other).panel.outcome != a.panel.outcome);
    }
}

TEST_CASE("a unit's draws do not depend on N") {
    const auto small = generate(preset("separated-trends", 10, 10, 5));
    const auto large = generate(preset("separated-trends", 20, 10, 5));
    for (Eigen::Index i = 0; i < 10; ++i) {
        CHECK(small.labels[static_cast<std::size_t>(i)] == large.labels[static_cast<std::size_t>(i)]);
        CHECK(small.panel.outcome.col(i) == large.panel.outcome.col(i));
    }
}

TEST_CASE("noise-free assembly is additive") {
    auto spec = preset("separated-trends", 25, 10, 3);
    spec.noise_sd = 0.0;
    spec.alpha_sd = 0.0;
    const auto sim = generate(spec);
    CHECK(sim.panel.outcome == sim.expected_outcome);
    for (std::size_t i = 0; i < 25; ++i) {
        const int k = sim.labels[i];
        const auto& e = sim.panel.treatment[i];
        for (std::size_t s = 0; s < sim.panel.period_count(); ++s) {
            const int t = sim.panel.periods[s];
            double y = spec.delta[static_cast<std::size_t>(k - 1)][s];
            if (e && t >= *e) y += spec.beta_level(k, t - *e);
            CHECK(sim.panel.outcome(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) == y);
        }
    }
}

TEST_CASE("unit-level effects and covariates") {
    auto spec = preset("heterogeneous-beta", 200, 10, 7);
    spec.p = 1;
    spec.theta = {{0.5}};
    const auto sim = generate(spec);
    CHECK(sim.panel.covariate_count() == 1);
    const Eigen::MatrixXd noiseless = sim.expected_outcome;
    // beta_i0 spreads around beta_0(k) + slope * E
    double dev = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        const auto& e = sim.panel.treatment[i];
        if (!e) continue;
        dev += sim.unit_beta(static_cast<Eigen::Index>(i), 0) - spec.beta_level(sim.labels[i], 0) - 0.2 * *e;
        ++n;
    }
    CHECK(std::abs(dev / static_cast<double>(n)) < 0.1);
    CHECK(noiseless.cols() == 200);
}

TEST_CASE("selection on type: timing follows the type") {
    const auto sim = generate(preset("selection-on-type", 400, 20, 1));
    for (std::size_t i = 0; i < 400; ++i) {
        const auto& e = sim.panel.treatment[i];
        if (sim.labels[i] == 1) {
            REQUIRE(e.has_value());
            CHECK(*e <= 2);
        } else if (e) {
            CHECK(*e >= 4);
        }
    }
}

TEST_CASE("presets are valid and unknown names are rejected") {
    for (const auto& name : preset_names())
        for (int T : {14, 20, 40}) CHECK_NOTHROW(preset(name, 50, T, 1).check());
    CHECK_THROWS_AS(preset("nope", 10, 10, 1), DataError);
    CHECK_THROWS_AS(preset("step-change", 10, 3, 1), DataError);
}

TEST_CASE("spec checks") {
    auto spec = preset("separated-trends", 10, 10, 1);
    SUBCASE("weights") {
        spec.type_probs = {0.7, 0.7};
        CHECK_THROWS_AS(spec.check(), DataError);
    }
    SUBCASE("zero weight") {
        spec.type_probs = {1.0, 0.0};
        CHECK_THROWS_AS(spec.check(), DataError);
    }
    SUBCASE("delta length") {
        spec.delta[0].pop_back();
        CHECK_THROWS_AS(spec.check(), DataError);
    }
    SUBCASE("timing out of range") {
        spec.timing.support.push_back(spec.T1);
        for (auto& p : spec.timing.probs) p.push_back(0.0);
        CHECK_THROWS_AS(spec.check(), DataError);
    }
    SUBCASE("AR coefficient") {
        spec.error = ErrorProcess::AR1;
        spec.error_coefficient = 1.0;
        CHECK_THROWS_AS(spec.check(), DataError);
    }
    CHECK(parse_error_process("ma1") == ErrorProcess::MA1);
    CHECK_THROWS_AS(parse_error_process("garch"), DataError);
}

TEST_CASE("error processes have the intended serial correlation") {
    for (auto process : {ErrorProcess::MA1, ErrorProcess::AR1}) {
        auto spec = preset("separated-trends", 2000, 10, 3);
        spec.alpha_sd = 0.0;
        spec.noise_sd = 1.0;
        spec.error = process;
        spec.error_coefficient = 0.5;
        const auto sim = generate(spec);
        const Eigen::MatrixXd u = sim.panel.outcome - sim.expected_outcome;
        const Eigen::Index T = u.rows();
        double c0 = 0, c1 = 0, c2 = 0;
        for (Eigen::Index i = 0; i < u.cols(); ++i)
            for (Eigen::Index s = 2; s < T; ++s) {
                c0 += u(s, i) * u(s, i);
                c1 += u(s, i) * u(s - 1, i);
                c2 += u(s, i) * u(s - 2, i);
            }
        // MA(1) with 0.5: rho1 = 0.4, rho2 = 0; AR(1): 0.5, 0.25
        const double rho1 = c1 / c0, rho2 = c2 / c0;
        if (process == ErrorProcess::MA1) {
            CHECK(rho1 == doctest::Approx(0.4).epsilon(0.05));
            CHECK(std::abs(rho2) < 0.03);
        } else {
            CHECK(rho1 == doctest::Approx(0.5).epsilon(0.05));
            CHECK(rho2 == doctest::Approx(0.25).epsilon(0.1));
        }
    }
}

TEST_CASE("misclassification examples") {
    std::vector<int> truth(100);
    for (std::size_t i = 0; i < 100; ++i) truth[i] = i < 50 ? 1 : 2;
    const TypeAssignment t(truth, 2);
    CHECK(misclassification_rate(t, t) == 0.0);
    std::vector<int> swapped = truth;
    for (int& k : swapped) k = 3 - k;
    CHECK(misclassification_rate(TypeAssignment(swapped, 2), t) == 0.0);
    std::vector<int> one = truth;
    one[7] = 2;
    CHECK(misclassification_rate(TypeAssignment(one, 2), t) == doctest::Approx(0.01));
    CHECK(best_label_match(TypeAssignment(swapped, 2), t) == std::vector<int>{2, 1});
    CHECK_THROWS_AS(misclassification_rate(TypeAssignment({1, 2}, 2), t), DataError);
    CHECK_THROWS_AS(misclassification_rate(TypeAssignment(truth, 3), t), DataError);
}

TEST_CASE("Hungarian matching agrees with brute force over permutations") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uniform(-5.0, 5.0);
    for (int n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::vector<double>> cost(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
            for (auto& row : cost)
                for (auto& c : row) c = std::round(uniform(rng));
            const auto match = hungarian(cost);
            double got = 0.0;
            for (int i = 0; i < n; ++i) got += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(match[static_cast<std::size_t>(i)])];
            std::vector<int> perm(static_cast<std::size_t>(n));
            std::iota(perm.begin(), perm.end(), 0);
            double best = std::numeric_limits<double>::infinity();
            do {
                double c = 0.0;
                for (int i = 0; i < n; ++i) c += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
                best = std::min(best, c);
            } while (std::next_permutation(perm.begin(), perm.end()));
            CHECK(got == best);
            std::vector<int> sorted = match;
            std::sort(sorted.begin(), sorted.end());
            for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
        }
    }
}

TEST_CASE("noise-free separated data is classified without error") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto spec = preset("separated-trends", 100, 10, seed);
        spec.noise_sd = 0.0;
        StudyConfig config;
        config.threads = 1;
        const auto r = run_replication(spec, config, 0);
        REQUIRE(r.ok);
        CHECK(r.misclassification == 0.0);
        for (const auto& e : r.effects) CHECK(e.estimate == doctest::Approx(e.truth).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("misclassification falls as T grows") {
    // extra noise keeps misclassification visible at these sizes
    std::vector<double> rates;
    for (int T : {10, 20, 40}) {
        auto spec = preset("separated-trends", 100, T, 11);
        spec.noise_sd = 1.0;
        StudyConfig config;
        config.restarts = 5;
        const auto summary = summarize(run_study(spec, config, 20));
        CHECK(summary.failed == 0);
        rates.push_back(summary.mean_misclassification);
    }
    MESSAGE("misclassification at T = 10, 20, 40: " << rates[0] << ", " << rates[1] << ", " << rates[2]);
    CHECK(rates[0] > 0.0);
    CHECK(rates[1] <= rates[0]);
    CHECK(rates[2] <= rates[1]);
}

TEST_CASE("study summary arithmetic") {
    std::vector<ReplicationResult> results(2);
    for (std::size_t i = 0; i < 2; ++i) {
        results[i].ok = true;
        results[i].misclassification = i == 0 ? 0.1 : 0.3;
        results[i].effects.push_back({1, 1, 0, 1.0, i == 0 ? 1.5 : 0.9, 0.2, i == 1});
    }
    results.push_back({});
    results.back().error = "boom";
    const auto s = summarize(results);
    CHECK(s.replications == 3);
    CHECK(s.failed == 1);
    CHECK(s.mean_misclassification == doctest::Approx(0.2));
    REQUIRE(s.rows.size() == 1);
    const auto& row = s.rows[0];
    CHECK(row.estimator == "typed");
    CHECK(row.n == 2);
    CHECK(row.mean_estimate == doctest::Approx(1.2));
    CHECK(row.bias == doctest::Approx(0.2));
    CHECK(row.rmse == doctest::Approx(std::sqrt((0.25 + 0.01) / 2)));
    CHECK(row.coverage == doctest::Approx(0.5));
    CHECK(row.mean_se == doctest::Approx(0.2));
}
