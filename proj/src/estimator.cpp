#include "ctwfe/estimator.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/lsq.hpp"
#include "ctwfe/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace ctwfe {

void FitConfig::check() const {
    if (restarts < 1) throw DataError("restarts must be at least 1", "restarts");
    if (max_iterations < 1) throw DataError("max_iterations must be at least 1", "max_iterations");
    if (!(tolerance >= 0.0)) throw DataError("tolerance must be non-negative", "tolerance");
    if (spec.types < 1) throw DataError("K must be at least 1", "K");
}

const char* to_string(RestartStatus status) {
    switch (status) {
        case RestartStatus::Converged: return "converged";
        case RestartStatus::ToleranceMet: return "tolerance";
        case RestartStatus::IterationLimit: return "iteration_limit";
        case RestartStatus::Degenerate: return "degenerate";
        case RestartStatus::Cycled: return "cycled";
        case RestartStatus::Stalled: return "stalled";
    }
    return "unknown";
}

Estimates::Estimates(ColumnLayout layout_)
    : layout(std::move(layout_)),
      values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()))),
      estimated(layout.size(), false) {}

namespace {

void check_conformable(const DifferencedPanel& panel, const Estimates& estimates) {
    const auto& layout = estimates.layout;
    if (layout.periods() != panel.periods || layout.spec().mode != panel.mode)
        throw DataError("estimates do not conform to the panel: period axis or differencing mode differ");
    if (static_cast<std::size_t>(estimates.values.size()) != layout.size())
        throw DataError("estimate vector length does not match the column layout");
    std::size_t covariate_columns = 0;
    for (const auto& c : layout.columns())
        if (c.kind == ColumnKind::Covariate) ++covariate_columns;
    const std::size_t per_type = layout.spec().type_specific_slopes ? static_cast<std::size_t>(layout.spec().types) : 1;
    if (covariate_columns != per_type * panel.covariate_count())
        throw DataError("estimates do not conform to the panel: covariate count differs");
}

class UnitEvaluator {
public:
    UnitEvaluator(const DifferencedPanel& panel, const Estimates& estimates)
        : panel_(panel),
          estimates_(estimates),
          block_(static_cast<Eigen::Index>(panel.row_count()), static_cast<Eigen::Index>(estimates.layout.size())) {}

    double rss(std::size_t unit, int type) {
        estimates_.layout.fill_unit(panel_, unit, type, block_);
        return (panel_.outcome.col(static_cast<Eigen::Index>(unit)) - block_ * estimates_.values).squaredNorm();
    }

    Eigen::VectorXd fitted(std::size_t unit, int type) {
        estimates_.layout.fill_unit(panel_, unit, type, block_);
        return block_ * estimates_.values;
    }

private:
    const DifferencedPanel& panel_;
    const Estimates& estimates_;
    Eigen::MatrixXd block_;
};

}  // namespace

Eigen::VectorXd Estimates::fitted(const DifferencedPanel& panel, std::size_t unit, int type) const {
    check_conformable(panel, *this);
    return UnitEvaluator(panel, *this).fitted(unit, type);
}

double unit_rss(const DifferencedPanel& panel, const Estimates& estimates, std::size_t unit, int type) {
    check_conformable(panel, estimates);
    if (type < 1 || type > estimates.layout.spec().types) throw DataError("type out of range");
    return UnitEvaluator(panel, estimates).rss(unit, type);
}

double objective(const DifferencedPanel& panel, const TypeAssignment& assignment, const Estimates& estimates) {
    check_conformable(panel, estimates);
    if (assignment.size() != panel.unit_count())
        throw DataError("assignment length does not match the number of units");
    if (assignment.types() != estimates.layout.spec().types)
        throw DataError("assignment K does not match the estimates");
    UnitEvaluator eval(panel, estimates);
    double total = 0.0;
    for (std::size_t i = 0; i < panel.unit_count(); ++i) total += eval.rss(i, assignment[i]);
    return total / static_cast<double>(panel.unit_count() * panel.row_count());
}

TypeAssignment assign_types(const DifferencedPanel& panel, const Estimates& estimates) {
    check_conformable(panel, estimates);
    const int K = estimates.layout.spec().types;
    UnitEvaluator eval(panel, estimates);
    std::vector<int> labels(panel.unit_count(), 1);
    for (std::size_t i = 0; i < panel.unit_count(); ++i) {
        double best = eval.rss(i, 1);
        for (int k = 2; k <= K; ++k) {
            const double candidate = eval.rss(i, k);
            if (candidate < best) {
                best = candidate;
                labels[i] = k;
            }
        }
    }
    return TypeAssignment(std::move(labels), K);
}

TypeAssignment initial_assignment(const PanelData& panel, int types, std::uint64_t seed, std::size_t restart) {
    const std::size_t N = panel.unit_count();
    if (types < 1) throw DataError("K must be at least 1", "K");
    if (N < static_cast<std::size_t>(types))
        throw DataError("cannot split " + std::to_string(N) + " units into " + std::to_string(types) + " types", "K");
    const std::uint64_t stream = derive_seed(seed, restart);
    std::vector<std::uint64_t> keys(N);
    for (std::size_t i = 0; i < N; ++i) keys[i] = splitmix64(stream ^ fnv1a(panel.units[i]));

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (keys[a] != keys[b]) return keys[a] < keys[b];
        return panel.units[a] < panel.units[b];
    });

    std::vector<int> labels(N, 1);
    for (std::size_t j = 0; j < N; ++j) {
        const std::size_t i = order[j];
        if (j < static_cast<std::size_t>(types)) {
            labels[i] = static_cast<int>(j) + 1;
        } else {
            const double u = static_cast<double>(splitmix64(keys[i]) >> 11) * 0x1.0p-53;
            labels[i] = 1 + std::min(types - 1, static_cast<int>(u * types));
        }
    }
    return TypeAssignment(std::move(labels), types);
}

namespace {

struct RegressionStep {
    Estimates estimates;
    double objective;
};

// Step 2: OLS given the assignment. Columns the regression cannot estimate keep
// their carried values; for rank-dropped columns the surviving coefficients are
// fitted around those values, which leaves the fitted values unchanged.
RegressionStep regress(const DifferencedPanel& panel, const Eigen::VectorXd& y, const TypeAssignment& gamma,
                       const Estimates& carried, const DesignSpec& spec) {
    const DesignMatrix design = build_design(panel, gamma, spec);
    const lsq::DesignFactorization factorization(design);

    Eigen::VectorXd response = y;
    bool adjusted = false;
    for (Eigen::Index pos : factorization.rank_dropped()) {
        const double c = carried[design.kept[static_cast<std::size_t>(pos)]];
        if (c != 0.0) {
            response -= c * design.values.col(pos);
            adjusted = true;
        }
    }
    const lsq::LsqSolution solution = factorization.solve(adjusted ? response : y);

    RegressionStep step{carried, 0.0};
    std::fill(step.estimates.estimated.begin(), step.estimates.estimated.end(), false);
    std::vector<bool> rank_dropped(design.kept.size(), false);
    for (Eigen::Index pos : factorization.rank_dropped()) rank_dropped[static_cast<std::size_t>(pos)] = true;
    for (std::size_t j = 0; j < design.kept.size(); ++j) {
        if (rank_dropped[j]) continue;
        step.estimates.values(static_cast<Eigen::Index>(design.kept[j])) = solution.coefficients(static_cast<Eigen::Index>(j));
        step.estimates.estimated[design.kept[j]] = true;
    }
    step.objective = solution.rss / static_cast<double>(panel.unit_count() * panel.row_count());
    return step;
}

std::size_t count_changes(const TypeAssignment& a, const TypeAssignment& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
    return n;
}

FitResult run_restart(const DifferencedPanel& panel, const Eigen::VectorXd& y, const TypeAssignment& init,
                      const FitConfig& config, std::size_t restart) {
    FitResult result;
    result.selected_restart = restart;
    RestartSummary summary;
    summary.restart = restart;
    summary.status = RestartStatus::IterationLimit;

    TypeAssignment gamma = init;
    Estimates current{ColumnLayout(panel, config.spec)};
    double current_objective = std::numeric_limits<double>::infinity();
    std::set<std::vector<int>> visited{gamma.labels()};

    for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
        RegressionStep step = regress(panel, y, gamma, current, config.spec);
        if (!summary.trace.empty() && step.objective > current_objective) {
            // Only rounding can make OLS worse than the reassigned previous fit.
            summary.status = RestartStatus::Stalled;
            // the reassignment that led here is undone
            gamma = result.assignment;
            summary.trace.back().changed = 0;
            break;
        }
        const double improvement = current_objective - step.objective;
        current = std::move(step.estimates);
        current_objective = step.objective;
        result.assignment = gamma;
        summary.trace.push_back({current_objective, 0});

        if (config.tolerance > 0.0 && summary.trace.size() > 1 && improvement < config.tolerance) {
            summary.status = RestartStatus::ToleranceMet;
            break;
        }

        TypeAssignment next = assign_types(panel, current);
        const std::size_t changed = count_changes(gamma, next);
        summary.trace.back().changed = changed;
        if (changed == 0) {
            summary.status = RestartStatus::Converged;
            break;
        }
        if (!next.covers_all_types()) {
            summary.status = RestartStatus::Degenerate;
            break;
        }
        if (!visited.insert(next.labels()).second) {
            summary.status = RestartStatus::Cycled;
            break;
        }
        if (iteration + 1 == config.max_iterations) break;
        gamma = std::move(next);
    }

    result.estimates = std::move(current);
    result.objective = current_objective;
    summary.objective = current_objective;
    result.trace = summary.trace;
    result.restarts.push_back(std::move(summary));
    return result;
}

void check_init(const DifferencedPanel& panel, const TypeAssignment& init, const FitConfig& config) {
    if (init.size() != panel.unit_count())
        throw DataError("initial assignment covers " + std::to_string(init.size()) + " units, panel has " +
                        std::to_string(panel.unit_count()));
    if (init.types() != config.spec.types) throw DataError("initial assignment K differs from the configured K", "K");
    if (!init.covers_all_types()) throw DataError("initial assignment leaves a type without units");
}

}  // namespace

void attach_diagnostics(const DifferencedPanel& panel, FitResult& result) {
    const DesignMatrix design = build_design(panel, result.assignment, result.estimates.layout.spec());
    const lsq::DesignFactorization factorization(design);
    result.dropped = design.dropped;
    result.rank_dropped.clear();
    for (Eigen::Index pos : factorization.rank_dropped())
        result.rank_dropped.push_back(design.columns[static_cast<std::size_t>(pos)]);
    result.warnings = design.warnings;
}

FitResult fit_once(const DifferencedPanel& panel, const TypeAssignment& init, const FitConfig& config) {
    config.check();
    check_init(panel, init, config);
    FitResult result = run_restart(panel, stacked_outcome(panel), init, config, 0);
    attach_diagnostics(panel, result);
    return result;
}

FitResult fit(const DifferencedPanel& panel, const FitConfig& config) {
    config.check();
    const auto restarts = static_cast<std::size_t>(config.restarts);
    const Eigen::VectorXd y = stacked_outcome(panel);

    std::vector<FitResult> runs(restarts);
    parallel_for(restarts, config.threads, [&](std::size_t r) {
        const TypeAssignment init = initial_assignment(*panel.source, config.spec.types, config.seed, r);
        runs[r] = run_restart(panel, y, init, config, r);
    });

    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < restarts; ++r) {
        if (runs[r].restarts.front().degenerate()) continue;
        if (!best || runs[r].objective < runs[*best].objective) best = r;
    }
    if (!best) throw NumericalError("every restart emptied a type; try fewer types or more restarts");

    std::vector<RestartSummary> summaries;
    summaries.reserve(restarts);
    for (auto& run : runs) summaries.push_back(std::move(run.restarts.front()));
    FitResult result = std::move(runs[*best]);
    result.restarts = std::move(summaries);

    result = canonicalize(result);
    attach_diagnostics(panel, result);
    return result;
}

FitResult relabel(const FitResult& result, const std::vector<int>& new_label) {
    const int K = result.assignment.types();
    if (new_label.size() != static_cast<std::size_t>(K)) throw DataError("relabelling must cover every type");
    std::vector<int> check = new_label;
    std::sort(check.begin(), check.end());
    for (int k = 1; k <= K; ++k)
        if (check[static_cast<std::size_t>(k - 1)] != k) throw DataError("relabelling is not a permutation of 1..K");

    FitResult out = result;
    std::vector<int> labels = result.assignment.labels();
    for (int& k : labels) k = new_label[static_cast<std::size_t>(k - 1)];
    out.assignment = TypeAssignment(std::move(labels), K);

    const auto& layout = result.estimates.layout;
    const auto target = layout.type_permutation(new_label);
    for (std::size_t j = 0; j < target.size(); ++j) {
        out.estimates.values(static_cast<Eigen::Index>(target[j])) = result.estimates.values(static_cast<Eigen::Index>(j));
        out.estimates.estimated[target[j]] = result.estimates.estimated[j];
    }
    auto map_column = [&](Column c) {
        if (c.type != 0) c.type = new_label[static_cast<std::size_t>(c.type - 1)];
        return c;
    };
    for (auto& d : out.dropped) d.column = map_column(d.column);
    for (auto& c : out.rank_dropped) c = map_column(c);
    std::sort(out.dropped.begin(), out.dropped.end(),
              [](const DroppedColumn& a, const DroppedColumn& b) { return a.column < b.column; });
    std::sort(out.rank_dropped.begin(), out.rank_dropped.end());
    out.warnings.clear();
    return out;
}

FitResult canonicalize(const FitResult& result) {
    const int K = result.assignment.types();
    const auto& layout = result.estimates.layout;
    std::vector<double> key(static_cast<std::size_t>(K), 0.0);
    for (int k = 1; k <= K; ++k) {
        double sum = 0.0;
        int count = 0;
        for (int t : layout.periods()) {
            if (t >= 0) continue;
            sum += result.estimates[layout.time_effect(k, t)];
            ++count;
        }
        key[static_cast<std::size_t>(k - 1)] = count > 0 ? sum / count : 0.0;
    }
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 1);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return key[static_cast<std::size_t>(a - 1)] < key[static_cast<std::size_t>(b - 1)]; });
    std::vector<int> new_label(static_cast<std::size_t>(K));
    for (std::size_t pos = 0; pos < order.size(); ++pos) new_label[static_cast<std::size_t>(order[pos] - 1)] = static_cast<int>(pos) + 1;

    bool identity = true;
    for (int k = 1; k <= K; ++k) identity = identity && new_label[static_cast<std::size_t>(k - 1)] == k;
    if (identity) return result;
    FitResult out = relabel(result, new_label);
    out.warnings = result.warnings;  // callers that need renumbered warnings reattach diagnostics
    return out;
}

}  // namespace ctwfe
