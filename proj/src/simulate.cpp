#include "ctwfe/simulate.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/parallel.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace ctwfe {

const char* to_string(ErrorProcess process) {
    switch (process) {
        case ErrorProcess::Iid: return "iid";
        case ErrorProcess::MA1: return "ma1";
        case ErrorProcess::AR1: return "ar1";
    }
    return "iid";
}

ErrorProcess parse_error_process(std::string_view text) {
    if (text == "iid") return ErrorProcess::Iid;
    if (text == "ma1") return ErrorProcess::MA1;
    if (text == "ar1") return ErrorProcess::AR1;
    throw DataError("unknown error process '" + std::string(text) + "' (expected iid, ma1 or ar1)", "error_process");
}

namespace {

void check_weights(const std::vector<double>& w, const std::string& field, bool allow_zero) {
    double sum = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || (!allow_zero && x == 0.0)) throw DataError(field + " must be positive", field);
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError(field + " must sum to 1", field);
}

}  // namespace

void DgpSpec::check() const {
    if (N < 1 || K < 1 || p < 0) throw DataError("N and K must be positive and p non-negative");
    if (T0 < 0 || T1 < 1) throw DataError("need T0 >= 0 and T1 >= 1", "T1");
    if (type_probs.size() != static_cast<std::size_t>(K)) throw DataError("type_probs needs K entries", "type_probs");
    check_weights(type_probs, "type_probs", false);
    if (delta.size() != static_cast<std::size_t>(K)) throw DataError("delta needs K profiles", "delta");
    for (const auto& d : delta)
        if (d.size() != static_cast<std::size_t>(periods()))
            throw DataError("each delta profile needs T+1 = " + std::to_string(periods()) + " levels", "delta");
    if (beta.size() != static_cast<std::size_t>(K)) throw DataError("beta needs K profiles", "beta");
    for (const auto& b : beta)
        if (b.empty()) throw DataError("beta profiles must not be empty", "beta");
    if (p > 0 && theta.size() != 1 && theta.size() != static_cast<std::size_t>(K))
        throw DataError("theta needs 1 or K rows", "theta");
    for (const auto& row : theta)
        if (row.size() != static_cast<std::size_t>(p)) throw DataError("theta rows need p entries", "theta");
    if (!covariate_mean.empty()) {
        if (covariate_mean.size() != static_cast<std::size_t>(K)) throw DataError("covariate_mean needs K rows", "covariate_mean");
        for (const auto& row : covariate_mean)
            if (row.size() != static_cast<std::size_t>(p)) throw DataError("covariate_mean rows need p entries", "covariate_mean");
    }
    if (!(alpha_sd >= 0.0) || !(noise_sd >= 0.0) || !(unit_beta_sd >= 0.0))
        throw DataError("standard deviations must be non-negative");
    if (error == ErrorProcess::AR1 && !(std::abs(error_coefficient) < 1.0))
        throw DataError("AR(1) coefficient must lie in (-1, 1)", "error_coefficient");
    for (int e : timing.support)
        if (e < first_period() + 1 || e > T1 - 1)
            throw DataError("treatment period " + std::to_string(e) + " lies outside the treatable range", "timing");
    if (timing.probs.size() != static_cast<std::size_t>(K) || timing.never_treated.size() != static_cast<std::size_t>(K))
        throw DataError("timing needs one distribution per type", "timing");
    for (int k = 0; k < K; ++k) {
        const auto& probs = timing.probs[static_cast<std::size_t>(k)];
        if (probs.size() != timing.support.size()) throw DataError("timing probabilities must match the support", "timing");
        const double never = timing.never_treated[static_cast<std::size_t>(k)];
        if (!(never >= 0.0 && never <= 1.0)) throw DataError("never-treated share must lie in [0, 1]", "timing");
        if (never < 1.0) check_weights(probs, "timing.probs", true);
    }
}

double DgpSpec::beta_level(int type, int r) const {
    const auto& b = beta[static_cast<std::size_t>(type - 1)];
    return b[std::min(static_cast<std::size_t>(r), b.size() - 1)];
}

Simulation generate(const DgpSpec& spec) {
    spec.check();
    const int periods = spec.periods();
    const auto N = static_cast<std::size_t>(spec.N);

    Simulation sim;
    PanelData& panel = sim.panel;
    const int width = static_cast<int>(std::to_string(spec.N).size());
    for (std::size_t i = 0; i < N; ++i) {
        std::ostringstream id;
        id << 'u' << std::setw(width) << std::setfill('0') << i + 1;
        panel.units.push_back(id.str());
    }
    for (int t = spec.first_period(); t <= spec.T1 - 1; ++t) panel.periods.push_back(t);
    panel.outcome.resize(periods, spec.N);
    sim.expected_outcome.resize(periods, spec.N);
    panel.covariates.assign(static_cast<std::size_t>(spec.p), Eigen::MatrixXd(periods, spec.N));
    for (int q = 0; q < spec.p; ++q) panel.covariate_names.push_back("x" + std::to_string(q));
    panel.treatment.resize(N);
    sim.unit_beta = Eigen::MatrixXd::Zero(spec.N, spec.T1);
    std::vector<int> labels(N);

    auto categorical = [](double u, const std::vector<double>& w) {
        double acc = 0.0;
        for (std::size_t j = 0; j + 1 < w.size(); ++j) {
            acc += w[j];
            if (u < acc) return j;
        }
        return w.size() - 1;
    };

    // One stream per unit, so unit i's draws do not depend on N.
    for (std::size_t i = 0; i < N; ++i) {
        boost::random::mt19937_64 rng(derive_seed(spec.seed, i));
        boost::random::uniform_01<double> uniform;
        boost::random::normal_distribution<double> normal;

        const int k = static_cast<int>(categorical(uniform(rng), spec.type_probs)) + 1;
        labels[i] = k;
        const auto kk = static_cast<std::size_t>(k - 1);

        std::optional<int> E;
        const double never_draw = uniform(rng);
        const double timing_draw = uniform(rng);
        if (!spec.timing.support.empty() && never_draw >= spec.timing.never_treated[kk])
            E = spec.timing.support[categorical(timing_draw, spec.timing.probs[kk])];
        panel.treatment[i] = E;

        const double alpha = spec.alpha_sd * normal(rng);
        for (int r = 0; r < spec.T1; ++r) {
            const double dev = spec.unit_beta_sd * normal(rng);
            sim.unit_beta(static_cast<Eigen::Index>(i), r) =
                spec.beta_level(k, r) + dev + (E ? spec.beta_timing_slope * *E : 0.0);
        }

        Eigen::VectorXd noise(periods);
        for (int s = 0; s < periods; ++s) noise(s) = normal(rng);
        Eigen::VectorXd u(periods);
        switch (spec.error) {
            case ErrorProcess::Iid: u = spec.noise_sd * noise; break;
            case ErrorProcess::MA1: {
                const double pre = normal(rng);
                for (int s = 0; s < periods; ++s)
                    u(s) = spec.noise_sd * (noise(s) + spec.error_coefficient * (s == 0 ? pre : noise(s - 1)));
                break;
            }
            case ErrorProcess::AR1: {
                const double c = spec.error_coefficient;
                u(0) = spec.noise_sd * noise(0) / std::sqrt(1.0 - c * c);
                for (int s = 1; s < periods; ++s) u(s) = c * u(s - 1) + spec.noise_sd * noise(s);
                break;
            }
        }

        const auto& theta = spec.theta.size() == 1 ? spec.theta.front() : (spec.p > 0 ? spec.theta[kk] : std::vector<double>{});
        for (int s = 0; s < periods; ++s) {
            const int t = spec.first_period() + s;
            double y = spec.delta[kk][static_cast<std::size_t>(s)];
            if (E && t >= *E) y += sim.unit_beta(static_cast<Eigen::Index>(i), t - *E);
            for (int q = 0; q < spec.p; ++q) {
                const double mean = spec.covariate_mean.empty() ? 0.0 : spec.covariate_mean[kk][static_cast<std::size_t>(q)];
                const double x = mean + normal(rng);
                panel.covariates[static_cast<std::size_t>(q)](s, static_cast<Eigen::Index>(i)) = x;
                y += theta[static_cast<std::size_t>(q)] * x;
            }
            sim.expected_outcome(s, static_cast<Eigen::Index>(i)) = y;
            panel.outcome(s, static_cast<Eigen::Index>(i)) = alpha + y + u(s);
        }
    }
    sim.labels = TypeAssignment(std::move(labels), spec.K);
    return sim;
}

std::vector<std::string> preset_names() {
    return {"separated-trends", "step-change", "weak-separation", "selection-on-type", "heterogeneous-beta"};
}

DgpSpec preset(std::string_view name, int N, int T, std::uint64_t seed) {
    if (T < 4) throw DataError("presets need T >= 4", "T");
    DgpSpec s;
    s.N = N;
    s.T0 = T / 2 - 1;
    s.T1 = T - s.T0;
    s.K = 2;
    s.type_probs = {0.5, 0.5};
    s.alpha_sd = 1.0;
    s.noise_sd = 0.5;
    s.seed = seed;

    auto trend = [&](double slope) {
        std::vector<double> d;
        for (int t = s.first_period(); t <= s.T1 - 1; ++t) d.push_back(slope * t);
        return d;
    };
    auto profile = [&](double level, double step) {
        std::vector<double> b;
        for (int r = 0; r < s.T1; ++r) b.push_back(level + step * r);
        return b;
    };
    auto spread = [&](std::vector<int> support, std::vector<double> never) {
        s.timing.support = std::move(support);
        const std::vector<double> uniform(s.timing.support.size(), 1.0 / static_cast<double>(s.timing.support.size()));
        s.timing.probs = {uniform, uniform};
        s.timing.never_treated = std::move(never);
    };

    if (name == "separated-trends" || name == "weak-separation" || name == "heterogeneous-beta") {
        const double slope = name == "weak-separation" ? 0.1 : 0.5;
        s.delta = {trend(slope), trend(-slope)};
        s.beta = {profile(1.0, 0.1), profile(0.5, 0.2)};
        spread({0, 2, 4}, {0.2, 0.2});
        if (name == "heterogeneous-beta") {
            s.unit_beta_sd = 0.3;
            s.beta_timing_slope = 0.2;
        }
    } else if (name == "step-change") {
        // Levels flip sign mid-sample; after first differencing the types
        // differ in a single period only.
        const double a = 0.125;
        std::vector<double> up, down;
        const int change = s.first_period() + s.periods() / 2;
        for (int t = s.first_period(); t <= s.T1 - 1; ++t) {
            up.push_back(t < change ? -a : a);
            down.push_back(t < change ? a : -a);
        }
        s.delta = {up, down};
        s.beta = {profile(0.5, 0.0), profile(0.5, 0.0)};
        s.noise_sd = 0.3;
        spread({0, 2, 4, 6}, {0.2, 0.2});
    } else if (name == "selection-on-type") {
        // Early adopters trend upward, late adopters are flat; effects are common.
        // The trend gap matches separated-trends; at half of it K-means on
        // 20 periods starts splitting on noise.
        s.delta = {trend(1.0), trend(0.0)};
        s.beta = {profile(1.0, 0.1), profile(1.0, 0.1)};
        s.timing.support = {0, 1, 2, 4, 6};
        s.timing.probs = {{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.5, 0.5}};
        s.timing.never_treated = {0.0, 0.3};
    } else {
        throw DataError("unknown preset '" + std::string(name) + "'", "preset");
    }
    for (int e : s.timing.support)
        if (e > s.T1 - 1) throw DataError("T is too short for preset '" + std::string(name) + "'", "T");
    return s;
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    for (const auto& row : cost)
        if (row.size() != n) throw DataError("assignment cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // potentials u (rows), v (columns); p[j] is the row matched to column j (1-based, 0 = none)
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(n);
    for (std::size_t j = 1; j <= n; ++j) match[p[j] - 1] = static_cast<int>(j - 1);
    return match;
}

std::vector<int> best_label_match(const TypeAssignment& estimated, const TypeAssignment& truth) {
    if (estimated.size() != truth.size()) throw DataError("assignments cover different numbers of units");
    if (estimated.types() != truth.types()) throw DataError("assignments have different K", "K");
    const auto K = static_cast<std::size_t>(truth.types());
    std::vector<std::vector<double>> cost(K, std::vector<double>(K, 0.0));
    for (std::size_t i = 0; i < truth.size(); ++i)
        cost[static_cast<std::size_t>(estimated[i] - 1)][static_cast<std::size_t>(truth[i] - 1)] -= 1.0;
    std::vector<int> match = hungarian(cost);
    for (int& m : match) ++m;
    return match;
}

double misclassification_rate(const TypeAssignment& estimated, const TypeAssignment& truth) {
    const std::vector<int> match = best_label_match(estimated, truth);
    if (truth.size() == 0) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) wrong += match[static_cast<std::size_t>(estimated[i] - 1)] != truth[i];
    return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

}  // namespace ctwfe
