#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

namespace riskquant::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) {
        throw std::invalid_argument("mean of empty sample");
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    return sum / static_cast<double>(xs.size());
}

// Quantile of a sorted sample by linear interpolation at h = (n-1)q.
// For even n this makes the median the mean of the two middle values.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) {
        throw std::invalid_argument("quantile of empty sample");
    }
    if (q < 0.0 || q > 1.0) {
        throw std::invalid_argument("quantile level outside [0,1]");
    }
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, q);
}

inline double median(std::vector<double> xs) {
    return quantile(std::move(xs), 0.5);
}

}  // namespace riskquant::stats
