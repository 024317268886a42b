#pragma once

#include <utility>
#include <vector>

namespace ctwfe {

/// Dissimilarity index of a district from per-school (black, white) counts:
/// 100 * 1/2 * sum_j |b_j / B - w_j / W|. 0 is perfectly representative,
/// 100 perfectly segregated.
double segregation_index(const std::vector<std::pair<double, double>>& school_counts);

}  // namespace ctwfe
