#include "ctwfe/montecarlo.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/estimator.hpp"
#include "ctwfe/inference.hpp"
#include "ctwfe/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <tuple>

namespace ctwfe {

namespace {

std::vector<EffectOutcome> score_effects(const EffectReport& report, const std::vector<int>& match,
                                         const std::function<double(int, int)>& truth, double z) {
    std::vector<EffectOutcome> out;
    for (const auto& row : report.effects) {
        if (row.bin || row.r < 0 || row.type == 0 || !row.cumulative || !row.se) continue;
        const int true_type = match[static_cast<std::size_t>(row.type - 1)];
        const double t = truth(true_type, row.r);
        out.push_back({row.type, true_type, row.r, t, *row.cumulative, *row.se,
                       std::abs(*row.cumulative - t) <= z * *row.se});
    }
    return out;
}

std::size_t trace_rises(const FitResult& r) {
    std::size_t n = 0;
    for (const auto& s : r.restarts)
        for (std::size_t i = 1; i < s.trace.size(); ++i) n += s.trace[i].objective > s.trace[i - 1].objective;
    return n;
}

}  // namespace

ReplicationResult run_replication(const DgpSpec& base, const StudyConfig& config, std::size_t rep) {
    ReplicationResult result;
    result.rep = rep;
    result.seed = derive_seed(base.seed, rep);
    DgpSpec spec = base;
    spec.seed = result.seed;

    try {
        const Simulation sim = generate(spec);
        auto panel = std::make_shared<const PanelData>(reindex_times(sim.panel));
        const DifferencedPanel dp = difference(panel, config.mode);

        FitConfig fc;
        fc.spec.types = config.types;
        fc.spec.lead_window = config.lead_window;
        fc.spec.lag_bin = config.lag_bin;
        fc.spec.mode = config.mode;
        fc.restarts = config.restarts;
        fc.max_iterations = config.max_iterations;
        fc.seed = result.seed;
        fc.threads = 1;

        const FitResult fit_result = fit(dp, fc);
        result.objective = fit_result.objective;
        result.trace_rises = trace_rises(fit_result);
        std::vector<int> match(static_cast<std::size_t>(config.types));
        if (config.types == spec.K) {
            result.misclassification = misclassification_rate(fit_result.assignment, sim.labels);
            match = best_label_match(fit_result.assignment, sim.labels);
        } else {
            for (int k = 1; k <= config.types; ++k) match[static_cast<std::size_t>(k - 1)] = std::min(k, spec.K);
        }
        const EffectReport report = cumulative_effects(fit_result.estimates, fit_vcov(dp, fit_result));
        result.effects = score_effects(report, match, [&](int k, int r) { return spec.beta_level(k, r); },
                                       config.z_critical);

        if (config.pooled) {
            FitConfig pooled = fc;
            pooled.spec.types = 1;
            pooled.restarts = 1;
            const FitResult pooled_fit = fit(dp, pooled);
            result.trace_rises += trace_rises(pooled_fit);
            const EffectReport pooled_report = cumulative_effects(pooled_fit.estimates, fit_vcov(dp, pooled_fit));
            auto mixed = [&](int, int r) {
                double v = 0.0;
                for (int k = 1; k <= spec.K; ++k) v += spec.type_probs[static_cast<std::size_t>(k - 1)] * spec.beta_level(k, r);
                return v;
            };
            result.pooled = score_effects(pooled_report, {0}, mixed, config.z_critical);
        }

        if (config.het_effects) {
            for (int k = 1; k <= config.types; ++k) {
                const int true_type = match[static_cast<std::size_t>(k - 1)];
                double target = 0.0;
                std::size_t count = 0;
                for (std::size_t i = 0; i < panel->unit_count(); ++i) {
                    if (sim.labels[i] != true_type || panel->treatment[i] != 0) continue;
                    target += sim.unit_beta(static_cast<Eigen::Index>(i), 0);
                    ++count;
                }
                if (count == 0) continue;
                try {
                    const HetEffect h = het_effect_r0(*panel, fit_result.assignment, k);
                    result.het.push_back({k, true_type, target / static_cast<double>(count), h.estimate, h.standard_error});
                } catch (const DataError&) {
                    // a fitted type without an E = 0 unit or without a comparison unit
                }
            }
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

std::vector<ReplicationResult> run_study(const DgpSpec& spec, const StudyConfig& config, std::size_t replications) {
    std::vector<ReplicationResult> results(replications);
    parallel_for(replications, config.threads, [&](std::size_t rep) { results[rep] = run_replication(spec, config, rep); });
    return results;
}

StudySummary summarize(const std::vector<ReplicationResult>& results) {
    StudySummary summary;
    summary.replications = results.size();
    struct Acc {
        std::size_t n = 0;
        double truth = 0, est = 0, est2 = 0, err2 = 0, se = 0, covered = 0;
    };
    std::map<std::tuple<int, int, int>, Acc> acc;  // (estimator, true type, r)
    double miss = 0.0, miss2 = 0.0;
    std::size_t ok = 0;
    for (const auto& res : results) {
        if (!res.ok) {
            ++summary.failed;
            continue;
        }
        ++ok;
        miss += res.misclassification;
        miss2 += res.misclassification * res.misclassification;
        auto add = [&](int estimator, const EffectOutcome& e) {
            Acc& a = acc[{estimator, estimator == 0 ? e.true_type : 0, e.r}];
            ++a.n;
            a.truth += e.truth;
            a.est += e.estimate;
            a.est2 += e.estimate * e.estimate;
            a.err2 += (e.estimate - e.truth) * (e.estimate - e.truth);
            a.se += e.se;
            a.covered += e.covered ? 1.0 : 0.0;
        };
        for (const auto& e : res.effects) add(0, e);
        for (const auto& e : res.pooled) add(1, e);
    }
    if (ok > 0) {
        summary.mean_misclassification = miss / static_cast<double>(ok);
        summary.sd_misclassification =
            ok > 1 ? std::sqrt(std::max(0.0, (miss2 - ok * summary.mean_misclassification * summary.mean_misclassification) /
                                                   static_cast<double>(ok - 1)))
                   : 0.0;
    }
    for (const auto& [key, a] : acc) {
        const auto [estimator, type, r] = key;
        const double n = static_cast<double>(a.n);
        const double mean = a.est / n;
        const double var = a.n > 1 ? std::max(0.0, (a.est2 - n * mean * mean) / (n - 1.0)) : 0.0;
        summary.rows.push_back({estimator == 0 ? "typed" : "pooled", type, r, a.n, a.truth / n, mean,
                                mean - a.truth / n, std::sqrt(var), std::sqrt(a.err2 / n), a.se / n, a.covered / n});
    }
    return summary;
}

}  // namespace ctwfe
