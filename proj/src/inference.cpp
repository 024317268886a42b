#include "ctwfe/inference.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/lsq.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace ctwfe {

using Eigen::Index;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::optional<Index> CovarianceEstimate::position(std::size_t layout_column) const {
    const auto it = std::lower_bound(layout_index.begin(), layout_index.end(), layout_column);
    if (it == layout_index.end() || *it != layout_column) return std::nullopt;
    return static_cast<Index>(it - layout_index.begin());
}

double CovarianceEstimate::standard_error(std::size_t layout_column) const {
    const auto pos = position(layout_column);
    return pos ? std::sqrt(std::max(0.0, vcov(*pos, *pos))) : kNaN;
}

CovarianceEstimate cluster_robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                       const std::vector<std::size_t>& clusters) {
    if (X.rows() != residuals.size() || clusters.size() != static_cast<std::size_t>(X.rows()))
        throw DataError("regressors, residuals and cluster ids must have the same number of rows");
    if (X.cols() == 0) throw DataError("no regressors");

    std::map<std::size_t, Eigen::VectorXd> scores;
    for (Index i = 0; i < X.rows(); ++i) {
        auto [it, inserted] = scores.try_emplace(clusters[static_cast<std::size_t>(i)]);
        if (inserted) it->second = Eigen::VectorXd::Zero(X.cols());
        it->second.noalias() += residuals(i) * X.row(i).transpose();
    }
    if (scores.size() < 2) throw DataError("cluster-robust covariance needs at least 2 clusters");

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(X.cols()).triangularView<Eigen::Upper>();
    const double scale = R.diagonal().cwiseAbs().maxCoeff();
    if (!(R.diagonal().cwiseAbs().minCoeff() > lsq::kRelativePivotTolerance * scale))
        throw NumericalError("regressors are collinear; covariance is not identified");
    const Eigen::MatrixXd Rinv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));

    CovarianceEstimate out;
    out.clusters = scores.size();
    out.bread = Rinv * Rinv.transpose();
    out.meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    for (const auto& [id, s] : scores) out.meat.selfadjointView<Eigen::Lower>().rankUpdate(s);
    out.meat = out.meat.selfadjointView<Eigen::Lower>();
    const Eigen::MatrixXd v = out.bread * out.meat * out.bread;
    out.vcov = 0.5 * (v + v.transpose());
    return out;
}

CovarianceEstimate cluster_robust_vcov(const DesignMatrix& design, const Eigen::VectorXd& residuals,
                                       const std::vector<Index>& exclude) {
    std::vector<bool> skip(design.column_count(), false);
    for (Index e : exclude) skip.at(static_cast<std::size_t>(e)) = true;
    std::vector<Index> use;
    for (std::size_t j = 0; j < design.column_count(); ++j)
        if (!skip[j]) use.push_back(static_cast<Index>(j));

    Eigen::MatrixXd X(design.values.rows(), static_cast<Index>(use.size()));
    for (std::size_t c = 0; c < use.size(); ++c) X.col(static_cast<Index>(c)) = design.values.col(use[c]);
    std::vector<std::size_t> clusters(design.rows.size());
    for (std::size_t i = 0; i < design.rows.size(); ++i) clusters[i] = design.rows[i].unit;

    CovarianceEstimate out = cluster_robust_vcov(X, residuals, clusters);
    for (Index j : use) {
        out.layout_index.push_back(design.kept[static_cast<std::size_t>(j)]);
        out.columns.push_back(design.columns[static_cast<std::size_t>(j)]);
    }
    return out;
}

CovarianceEstimate fit_vcov(const DifferencedPanel& panel, const FitResult& result) {
    const DesignMatrix design = build_design(panel, result.assignment, result.estimates.layout.spec());
    const lsq::DesignFactorization factorization(design);
    Eigen::VectorXd coefficients(static_cast<Index>(design.kept.size()));
    for (std::size_t j = 0; j < design.kept.size(); ++j) coefficients(static_cast<Index>(j)) = result.estimates[design.kept[j]];
    const Eigen::VectorXd residuals = stacked_outcome(panel) - design.values * coefficients;
    return cluster_robust_vcov(design, residuals, factorization.rank_dropped());
}

CumulativeSeries cumulate(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& vcov) {
    const Index n = coefficients.size();
    if (vcov.rows() != n || vcov.cols() != n) throw DataError("covariance does not match the coefficient vector");
    CumulativeSeries out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    double sum = 0.0;
    double variance = 0.0;
    for (Index r = 0; r < n; ++r) {
        sum += coefficients(r);
        // 1'V1 grows by the new diagonal entry plus twice its covariance with the earlier terms
        variance += vcov(r, r) + 2.0 * vcov.row(r).head(r).sum();
        out.sums(r) = sum;
        out.standard_errors(r) = std::sqrt(std::max(0.0, variance));
    }
    return out;
}

const EffectRow* EffectReport::find(int type, int r, bool bin) const {
    for (const auto& row : effects)
        if (row.type == type && row.r == r && row.bin == bin) return &row;
    return nullptr;
}

EffectReport cumulative_effects(const Estimates& estimates, const CovarianceEstimate& vcov) {
    const auto& layout = estimates.layout;
    const auto& spec = layout.spec();
    EffectReport report;
    report.mode = spec.mode;
    const bool levels = spec.mode == Differencing::MeanDiff;

    auto coefficient_row = [&](int type, int r, bool bin, std::size_t col) {
        EffectRow row{type, r, bin, std::nullopt, std::nullopt, std::nullopt, {}};
        if (vcov.position(col)) {
            row.differenced = estimates[col];
            row.se = vcov.standard_error(col);
            if (levels) row.cumulative = row.differenced;
        } else {
            row.note = "not estimated";
        }
        return row;
    };

    if (spec.shared_leads)
        for (int r = -spec.lead_window; r <= -2; ++r)
            report.effects.push_back(coefficient_row(0, r, false, *layout.treatment(1, r)));

    for (int k = 1; k <= spec.types; ++k) {
        if (!spec.shared_leads)
            for (int r = -spec.lead_window; r <= -2; ++r)
                report.effects.push_back(coefficient_row(k, r, false, *layout.treatment(k, r)));
        report.effects.push_back({k, -1, false, 0.0, 0.0, 0.0, "reference"});

        if (levels) {
            for (int r = 0; r <= layout.last_lag(); ++r)
                report.effects.push_back(coefficient_row(k, r, false, *layout.treatment(k, r)));
        } else {
            std::vector<Index> summed;
            bool gap = false;
            for (int r = 0; r <= layout.last_lag(); ++r) {
                const std::size_t col = *layout.treatment(k, r);
                EffectRow row = coefficient_row(k, r, false, col);
                const auto pos = vcov.position(col);
                if (!pos || gap) {
                    if (pos) row.note = "after gap";
                    gap = true;
                    report.effects.push_back(std::move(row));
                    continue;
                }
                summed.push_back(*pos);
                double sum = 0.0;
                for (Index p : summed) sum += estimates[vcov.layout_index[static_cast<std::size_t>(p)]];
                double variance = 0.0;
                for (Index a : summed)
                    for (Index b : summed) variance += vcov.vcov(a, b);
                row.cumulative = sum;
                row.se = std::sqrt(std::max(0.0, variance));
                report.effects.push_back(std::move(row));
            }
        }
        if (spec.lag_bin)
            report.effects.push_back(coefficient_row(k, *spec.lag_bin + 1, true, *layout.treatment(k, *spec.lag_bin + 1)));
    }

    const auto& periods = layout.periods();
    for (int k = 1; k <= spec.types; ++k) {
        if (levels) {
            double mean = 0.0;
            for (int t : periods) mean += estimates[layout.time_effect(k, t)];
            mean /= static_cast<double>(periods.size());
            for (int t : periods) report.time_effects.push_back({k, t, estimates[layout.time_effect(k, t)] - mean});
        } else {
            double level = 0.0;
            report.time_effects.push_back({k, periods.front() - 1, 0.0});
            for (int t : periods) {
                level += estimates[layout.time_effect(k, t)];
                report.time_effects.push_back({k, t, level});
            }
        }
    }
    return report;
}

HetEffect het_effect_r0(const PanelData& panel, const TypeAssignment& assignment, int type, bool include_never_treated) {
    if (!panel.is_reindexed()) throw DataError("het_effect_r0 needs a reindexed panel");
    if (assignment.size() != panel.unit_count()) throw DataError("assignment length does not match the panel");
    if (type < 1 || type > assignment.types()) throw DataError("type out of range", "k");
    const auto row0 = panel.period_row(0);
    const auto row_prev = panel.period_row(-1);
    if (!row0 || !row_prev) throw DataError("panel lacks period 0 or period -1");

    std::vector<double> treated;
    std::vector<double> comparison;
    for (std::size_t i = 0; i < panel.unit_count(); ++i) {
        if (assignment[i] != type) continue;
        const auto& e = panel.treatment[i];
        const double change = panel.outcome(static_cast<Index>(*row0), static_cast<Index>(i)) -
                              panel.outcome(static_cast<Index>(*row_prev), static_cast<Index>(i));
        if (e && *e == 0)
            treated.push_back(change);
        else if ((e && *e > 0) || (!e && include_never_treated))
            comparison.push_back(change);
    }
    if (treated.empty()) throw DataError("type " + std::to_string(type) + " has no unit first treated at period 0");
    if (comparison.empty()) throw DataError("type " + std::to_string(type) + " has no not-yet-treated comparison unit");

    auto moments = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double var = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : kNaN;
        return std::pair{mean, var};
    };
    const auto [m1, v1] = moments(treated);
    const auto [m0, v0] = moments(comparison);
    return {m1 - m0, std::sqrt(v1 / static_cast<double>(treated.size()) + v0 / static_cast<double>(comparison.size())),
            treated.size(), comparison.size()};
}

std::vector<BalanceVariable> pretreatment_means(const PanelData& panel) {
    std::vector<Index> rows;
    for (std::size_t s = 0; s < panel.period_count(); ++s)
        if (panel.periods[s] < 0) rows.push_back(static_cast<Index>(s));
    if (rows.empty()) throw DataError("panel has no pre-treatment period");

    auto unit_means = [&](const Eigen::MatrixXd& m) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(m.cols());
        for (Index r : rows) out += m.row(r).transpose();
        return Eigen::VectorXd(out / static_cast<double>(rows.size()));
    };
    std::vector<BalanceVariable> out;
    out.push_back({"outcome", unit_means(panel.outcome)});
    for (std::size_t p = 0; p < panel.covariate_count(); ++p) {
        const std::string name = p < panel.covariate_names.size() ? panel.covariate_names[p] : "x" + std::to_string(p);
        out.push_back({name, unit_means(panel.covariates[p])});
    }
    return out;
}

double chi_square_sf(double statistic, int df) {
    if (df <= 0 || statistic <= 0.0) return 1.0;
    if (std::isinf(statistic)) return 0.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * statistic);
}

BalanceReport balancedness_test(const TypeAssignment& assignment, const std::vector<BalanceVariable>& variables) {
    const std::size_t N = assignment.size();
    for (const auto& v : variables)
        if (static_cast<std::size_t>(v.values.size()) != N)
            throw DataError("balance variable '" + v.name + "' does not have one value per unit", v.name);
    const auto m = static_cast<Index>(variables.size());
    BalanceReport report;

    for (int a = 1; a <= assignment.types(); ++a) {
        for (int b = a + 1; b <= assignment.types(); ++b) {
            std::vector<std::size_t> ga, gb;
            for (std::size_t i = 0; i < N; ++i) {
                if (assignment[i] == a) ga.push_back(i);
                if (assignment[i] == b) gb.push_back(i);
            }
            auto sample = [&](const std::vector<std::size_t>& g) {
                Eigen::MatrixXd s(static_cast<Index>(g.size()), m);
                for (std::size_t r = 0; r < g.size(); ++r)
                    for (Index v = 0; v < m; ++v) s(static_cast<Index>(r), v) = variables[static_cast<std::size_t>(v)].values(static_cast<Index>(g[r]));
                return s;
            };
            auto covariance = [](const Eigen::MatrixXd& s, const Eigen::RowVectorXd& mean) {
                if (s.rows() < 2) return Eigen::MatrixXd(Eigen::MatrixXd::Constant(s.cols(), s.cols(), kNaN));
                const Eigen::MatrixXd c = s.rowwise() - mean;
                return Eigen::MatrixXd(c.transpose() * c / static_cast<double>(s.rows() - 1));
            };
            const Eigen::MatrixXd sa = sample(ga);
            const Eigen::MatrixXd sb = sample(gb);
            const Eigen::RowVectorXd mean_a = ga.empty() ? Eigen::RowVectorXd::Constant(m, kNaN) : Eigen::RowVectorXd(sa.colwise().mean());
            const Eigen::RowVectorXd mean_b = gb.empty() ? Eigen::RowVectorXd::Constant(m, kNaN) : Eigen::RowVectorXd(sb.colwise().mean());
            const Eigen::MatrixXd cov_a = covariance(sa, mean_a);
            const Eigen::MatrixXd cov_b = covariance(sb, mean_b);
            const double na = static_cast<double>(ga.size());
            const double nb = static_cast<double>(gb.size());

            BalanceJoint joint{a, b, ga.size(), gb.size(), kNaN, 0, kNaN, {}};
            std::vector<Index> included;
            for (Index v = 0; v < m; ++v) {
                const auto& name = variables[static_cast<std::size_t>(v)].name;
                report.rows.push_back({name, a, b, mean_a(v), std::sqrt(cov_a(v, v)), mean_b(v), std::sqrt(cov_b(v, v)),
                                       mean_a(v) - mean_b(v), std::sqrt(cov_a(v, v) / na + cov_b(v, v) / nb)});
                if (cov_a(v, v) == 0.0 && cov_b(v, v) == 0.0)
                    joint.notes.push_back("'" + name + "' is constant within both types; left out of the joint test");
                else
                    included.push_back(v);
            }
            if (ga.size() < 2 || gb.size() < 2) {
                joint.notes.push_back("a type has fewer than 2 units; no joint test");
                report.joint.push_back(std::move(joint));
                continue;
            }
            const auto q = static_cast<Index>(included.size());
            Eigen::VectorXd d(q);
            Eigen::MatrixXd S(q, q);
            for (Index x = 0; x < q; ++x) {
                d(x) = mean_a(included[static_cast<std::size_t>(x)]) - mean_b(included[static_cast<std::size_t>(x)]);
                for (Index y = 0; y < q; ++y) {
                    const Index vx = included[static_cast<std::size_t>(x)];
                    const Index vy = included[static_cast<std::size_t>(y)];
                    S(x, y) = cov_a(vx, vy) / na + cov_b(vx, vy) / nb;
                }
            }
            if (q == 0) {
                joint.statistic = 0.0;
                joint.p_value = 1.0;
                report.joint.push_back(std::move(joint));
                continue;
            }
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(S);
            cod.setThreshold(1e-12);
            joint.df = static_cast<int>(cod.rank());
            if (cod.rank() < q) joint.notes.push_back("covariance of differences is singular; pseudo-inverse used");
            joint.statistic = d.dot(cod.pseudoInverse() * d);
            joint.p_value = chi_square_sf(joint.statistic, joint.df);
            report.joint.push_back(std::move(joint));
        }
    }
    return report;
}

}  // namespace ctwfe
