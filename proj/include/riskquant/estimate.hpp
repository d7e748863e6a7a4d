#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace riskquant {

enum class EstimateKind { probability, quantity };

inline std::string to_string(EstimateKind k) {
    return k == EstimateKind::probability ? "probability" : "quantity";
}

inline EstimateKind estimate_kind_from_string(const std::string& s) {
    if (s == "probability") return EstimateKind::probability;
    if (s == "quantity") return EstimateKind::quantity;
    throw std::invalid_argument("unknown estimate kind '" + s + "'");
}

/**
 * ThreePointEstimate — an elicited (lowest plausible, best guess, highest
 * plausible) triple plus the stated confidence that the true value lies
 * inside [low, high]. The universal raw input for every model parameter.
 */
struct ThreePointEstimate {
    double low = 0.0;
    double mode = 0.0;
    double high = 0.0;
    double confidence = 0.9;  // in [0.5, 1.0]
    EstimateKind kind = EstimateKind::probability;

    bool degenerate() const { return low == mode && mode == high; }

    bool operator==(const ThreePointEstimate&) const = default;
};

inline void check_estimate(const ThreePointEstimate& est) {
    if (!std::isfinite(est.low) || !std::isfinite(est.mode) ||
        !std::isfinite(est.high) || !std::isfinite(est.confidence)) {
        throw std::invalid_argument("estimate has non-finite values");
    }
    if (!(est.low <= est.mode && est.mode <= est.high)) {
        throw std::invalid_argument("estimate violates low <= mode <= high");
    }
    if (est.confidence < 0.5 || est.confidence > 1.0) {
        throw std::invalid_argument("estimate confidence outside [0.5, 1.0]");
    }
    if (est.kind == EstimateKind::probability &&
        (est.low < 0.0 || est.high > 1.0)) {
        throw std::invalid_argument("probability estimate outside [0, 1]");
    }
    if (est.kind == EstimateKind::quantity && est.low < 0.0) {
        throw std::invalid_argument("quantity estimate has negative low bound");
    }
}

}  // namespace riskquant
