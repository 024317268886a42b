#pragma once

// Shared test fixtures, plus an event-study regression written from scratch
// (no ctwfe design or lsq code) used as an independent reference.

#include "ctwfe/panel.hpp"
#include "ctwfe/simulate.hpp"
#include "ctwfe/transform.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

/// Panel from rows of Y (one vector per unit) over periods first..first+T.
inline ctwfe::PanelData panel_from_rows(const std::vector<std::vector<double>>& y, int first_period,
                                        const std::vector<std::optional<int>>& treatment) {
    ctwfe::PanelData p;
    const auto n = static_cast<Eigen::Index>(y.size());
    const auto t = static_cast<Eigen::Index>(y.front().size());
    for (Eigen::Index i = 0; i < n; ++i) p.units.push_back("u" + std::to_string(i));
    for (Eigen::Index s = 0; s < t; ++s) p.periods.push_back(first_period + static_cast<int>(s));
    p.outcome.resize(t, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index s = 0; s < t; ++s) p.outcome(s, i) = y[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)];
    p.treatment = treatment;
    return p;
}

/// Random reindexed panel: periods -T0-1..T1-1, treatment drawn from
/// {0, ..., T1-1} or never, with at least one unit treated at 0.
inline ctwfe::PanelData random_panel(int N, int T0, int T1, int p, std::uint64_t seed, double never_share = 0.2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    ctwfe::PanelData panel;
    for (int i = 0; i < N; ++i) panel.units.push_back("unit" + std::to_string(i));
    for (int t = -T0 - 1; t <= T1 - 1; ++t) panel.periods.push_back(t);
    const auto rows = static_cast<Eigen::Index>(panel.periods.size());
    panel.outcome.resize(rows, N);
    for (Eigen::Index s = 0; s < rows; ++s)
        for (int i = 0; i < N; ++i) panel.outcome(s, i) = normal(rng);
    for (int q = 0; q < p; ++q) {
        Eigen::MatrixXd x(rows, N);
        for (Eigen::Index s = 0; s < rows; ++s)
            for (int i = 0; i < N; ++i) x(s, i) = normal(rng);
        panel.covariates.push_back(x);
        panel.covariate_names.push_back("x" + std::to_string(q));
    }
    for (int i = 0; i < N; ++i) {
        if (i == 0) {
            panel.treatment.emplace_back(0);
        } else if (uniform(rng) < never_share) {
            panel.treatment.emplace_back(std::nullopt);
        } else {
            panel.treatment.emplace_back(static_cast<int>(uniform(rng) * T1));
        }
    }
    return panel;
}

inline std::shared_ptr<const ctwfe::PanelData> shared(ctwfe::PanelData p) {
    return std::make_shared<const ctwfe::PanelData>(std::move(p));
}

/// Two well separated trend types, noiseless unless noise_sd > 0.
inline ctwfe::DgpSpec separated(int N, int T, double noise_sd, std::uint64_t seed) {
    ctwfe::DgpSpec s = ctwfe::preset("separated-trends", N, T, seed);
    s.noise_sd = noise_sd;
    return s;
}

struct Drawn {
    ctwfe::Simulation sim;
    std::shared_ptr<const ctwfe::PanelData> panel;  // reindexed
    ctwfe::DifferencedPanel transformed;
};

inline Drawn draw(const ctwfe::DgpSpec& spec, ctwfe::Differencing mode = ctwfe::Differencing::FirstDiff) {
    Drawn d{ctwfe::generate(spec), nullptr, {}};
    d.panel = shared(ctwfe::reindex_times(d.sim.panel));
    d.transformed = ctwfe::difference(d.panel, mode);
    return d;
}

/// Plain first-differenced event-study OLS, K = 1, built row by row and
/// solved through the normal equations. Returns coefficients by column name.
inline std::map<std::string, double> reference_event_study(const ctwfe::PanelData& panel, int lead_window) {
    const int T0 = -panel.periods.front() - 1;
    const int T1 = panel.periods.back() + 1;
    const auto N = static_cast<int>(panel.units.size());
    const int T = T0 + T1;

    std::vector<std::string> names;
    for (int t = -T0; t <= T1 - 1; ++t) names.push_back("timefe[k=1][t=" + std::to_string(t) + "]");
    for (int r = -lead_window; r <= -2; ++r) names.push_back("treat[k=1][r=" + std::to_string(r) + "]");
    for (int r = 0; r <= T1 - 1; ++r) names.push_back("treat[k=1][r=" + std::to_string(r) + "]");
    for (std::size_t q = 0; q < panel.covariates.size(); ++q) names.push_back("x[p=" + std::to_string(q) + "]");
    const auto cols = static_cast<Eigen::Index>(names.size());

    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N * T, cols);
    Eigen::VectorXd y(N * T);
    Eigen::Index row = 0;
    for (int i = 0; i < N; ++i) {
        for (int s = 1; s <= T; ++s, ++row) {
            const int t = panel.periods[static_cast<std::size_t>(s)];
            y(row) = panel.outcome(s, i) - panel.outcome(s - 1, i);
            X(row, t + T0) = 1.0;
            const auto& e = panel.treatment[static_cast<std::size_t>(i)];
            if (e) {
                const int r = t - *e;
                if (r <= -2 && r >= -lead_window) X(row, T + (r + lead_window)) = 1.0;
                if (r >= 0) X(row, T + std::max(0, lead_window - 1) + r) = 1.0;
            }
            for (std::size_t q = 0; q < panel.covariates.size(); ++q)
                X(row, T + std::max(0, lead_window - 1) + T1 + static_cast<Eigen::Index>(q)) =
                    panel.covariates[q](s, i) - panel.covariates[q](s - 1, i);
        }
    }
    // drop columns no row touches
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < cols; ++c)
        if (X.col(c).cwiseAbs().sum() > 0) keep.push_back(c);
    Eigen::MatrixXd Xk(X.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) Xk.col(static_cast<Eigen::Index>(c)) = X.col(keep[c]);
    const Eigen::VectorXd b = (Xk.transpose() * Xk).ldlt().solve(Xk.transpose() * y);

    std::map<std::string, double> out;
    for (std::size_t c = 0; c < keep.size(); ++c) out[names[static_cast<std::size_t>(keep[c])]] = b(static_cast<Eigen::Index>(c));
    return out;
}

}  // namespace fixtures
