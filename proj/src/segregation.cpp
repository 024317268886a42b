#include "ctwfe/segregation.hpp"

#include "ctwfe/error.hpp"

#include <cmath>

namespace ctwfe {

double segregation_index(const std::vector<std::pair<double, double>>& school_counts) {
    double B = 0.0;
    double W = 0.0;
    for (const auto& [b, w] : school_counts) {
        if (!(b >= 0.0) || !(w >= 0.0) || !std::isfinite(b) || !std::isfinite(w))
            throw DataError("school counts must be finite and non-negative", "counts");
        B += b;
        W += w;
    }
    if (B <= 0.0) throw DataError("district has no black students (B = 0)", "counts");
    if (W <= 0.0) throw DataError("district has no white students (W = 0)", "counts");
    double sum = 0.0;
    for (const auto& [b, w] : school_counts) sum += std::abs(b / B - w / W);
    return 50.0 * sum;
}

}  // namespace ctwfe
