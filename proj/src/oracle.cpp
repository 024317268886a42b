#include "ctwfe/oracle.hpp"

#include "ctwfe/error.hpp"
#include "ctwfe/lsq.hpp"
#include "ctwfe/parallel.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace ctwfe {

std::uint64_t surjection_count(int n, int k) {
    // inclusion-exclusion: sum_j (-1)^j C(k, j) (k - j)^n
    std::int64_t total = 0;
    std::int64_t binom = 1;
    for (int j = 0; j <= k; ++j) {
        std::int64_t power = 1;
        for (int e = 0; e < n; ++e) power *= (k - j);
        total += (j % 2 == 0 ? 1 : -1) * binom * power;
        binom = binom * (k - j) / (j + 1);
    }
    return static_cast<std::uint64_t>(total);
}

namespace {

struct BlockBest {
    std::optional<std::uint64_t> code;
    double objective = std::numeric_limits<double>::infinity();
    std::uint64_t enumerated = 0;
};

// Label vector of enumeration code c; unit 0 is the most significant digit,
// so increasing codes are lexicographically increasing label vectors.
void decode(std::uint64_t c, int K, std::vector<int>& labels) {
    for (std::size_t i = labels.size(); i-- > 0;) {
        labels[i] = static_cast<int>(c % static_cast<std::uint64_t>(K)) + 1;
        c /= static_cast<std::uint64_t>(K);
    }
}

}  // namespace

OracleResult exhaustive_fit(const DifferencedPanel& panel, const DesignSpec& spec, unsigned threads) {
    const int K = spec.types;
    const std::size_t N = panel.unit_count();
    if (K < 1) throw DataError("K must be at least 1", "K");
    if (N < static_cast<std::size_t>(K)) throw DataError("fewer units than types", "K");
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < N; ++i) {
        total *= static_cast<std::uint64_t>(K);
        if (total > kOracleLimit)
            throw DataError("exhaustive search over K^N assignments exceeds the limit of " + std::to_string(kOracleLimit));
    }

    const Eigen::VectorXd y = stacked_outcome(panel);
    const double cells = static_cast<double>(N * panel.row_count());
    const std::uint64_t block_size = 256;
    const std::uint64_t blocks = (total + block_size - 1) / block_size;
    std::vector<BlockBest> best(blocks);

    parallel_for(blocks, threads, [&](std::size_t b) {
        std::vector<int> labels(N);
        std::vector<int> seen(static_cast<std::size_t>(K));
        BlockBest& out = best[b];
        const std::uint64_t end = std::min(total, (b + 1) * block_size);
        for (std::uint64_t c = b * block_size; c < end; ++c) {
            decode(c, K, labels);
            std::fill(seen.begin(), seen.end(), 0);
            for (int k : labels) seen[static_cast<std::size_t>(k - 1)] = 1;
            if (std::find(seen.begin(), seen.end(), 0) != seen.end()) continue;
            ++out.enumerated;
            const TypeAssignment gamma(labels, K);
            const DesignMatrix design = build_design(panel, gamma, spec);
            const double q = lsq::solve(design, y).rss / cells;
            if (q < out.objective) {
                out.objective = q;
                out.code = c;
            }
        }
    });

    OracleResult result;
    std::optional<std::uint64_t> code;
    double objective = std::numeric_limits<double>::infinity();
    for (const auto& b : best) {
        result.enumerated += b.enumerated;
        if (b.code && b.objective < objective) {
            objective = b.objective;
            code = b.code;
        }
    }
    if (!code) throw NumericalError("no assignment could be evaluated");
    std::vector<int> labels(N);
    decode(*code, K, labels);
    result.best_assignment = TypeAssignment(std::move(labels), K);
    result.best_objective = objective;
    return result;
}

}  // namespace ctwfe
