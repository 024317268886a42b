#pragma once

#include "ctwfe/design.hpp"
#include "ctwfe/panel.hpp"
#include "ctwfe/transform.hpp"

#include <cstdint>

namespace ctwfe {

/// Largest K^N the exhaustive search accepts.
inline constexpr std::uint64_t kOracleLimit = 1'000'000;

struct OracleResult {
    TypeAssignment best_assignment;
    double best_objective = 0.0;
    std::uint64_t enumerated = 0;  // surjective labelings evaluated
};

/// Global minimum of the objective over every assignment that uses all K
/// types, by enumeration. Ties go to the lexicographically smallest label
/// vector. Throws DataError when K^N exceeds kOracleLimit.
OracleResult exhaustive_fit(const DifferencedPanel& panel, const DesignSpec& spec, unsigned threads = 0);

/// Number of surjections of n units onto k labels.
std::uint64_t surjection_count(int n, int k);

}  // namespace ctwfe
