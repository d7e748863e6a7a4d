#pragma once

#include <variant>

#include "riskquant/draw_rng.hpp"
#include "riskquant/estimate.hpp"

#include "json.hpp"

namespace riskquant {

/// Two-parameter Beta on [0, 1].
struct BetaParams {
    double alpha = 1.0;
    double beta = 1.0;
    bool operator==(const BetaParams&) const = default;
};

/// PERT on [lower, upper] with mode `mode`; mean is (lower + 4*mode + upper)/6
/// by construction (internal Beta shapes 1 + 4*(mode-lower)/(upper-lower) and
/// 1 + 4*(upper-mode)/(upper-lower)).
struct PertParams {
    double lower = 0.0;
    double mode = 0.0;
    double upper = 0.0;
    bool operator==(const PertParams&) const = default;
};

/// Degenerate distribution; produced by low = mode = high estimates.
struct PointMass {
    double value = 0.0;
    bool operator==(const PointMass&) const = default;
};

using FittedDistribution = std::variant<PointMass, BetaParams, PertParams>;

/// Convergence diagnostics for a fit. `residual` is the absolute coverage
/// error for Beta fits and the RMS quantile residual for PERT fits.
struct FitReport {
    bool converged = true;
    int iterations = 0;
    double residual = 0.0;
};

/**
 * Fit a Beta distribution to a probability estimate.
 *
 * The fitted Beta has mode equal to est.mode exactly (parameterized as
 * alpha = 1 + mode*(kappa-2), beta = 1 + (1-mode)*(kappa-2)) and mass
 * est.confidence on [est.low, est.high], solved by bisection on the
 * concentration kappa in [2+1e-6, 1e6]. When the target coverage is not
 * attainable within that family the nearest endpoint is returned and the
 * residual reported. A mode at 0 or 1 switches to the one-parameter
 * family alpha = 1 (resp. beta = 1) fitted to the single interior
 * interval endpoint. Degenerate estimates yield a PointMass.
 */
FittedDistribution fit_beta(const ThreePointEstimate& est,
                            FitReport* report = nullptr);

/**
 * Fit a PERT distribution to a quantity estimate.
 *
 * The mode is pinned to est.mode; (lower, upper) minimize the squared
 * residuals of the central credible quantiles at levels (1-c)/2 and
 * (1+c)/2 against est.low and est.high, under 0 < lower <= mode <= upper,
 * via projected coordinate descent (golden-section line searches) started
 * from lower = 0.9*est.low, upper = 1.1*est.high. Stops when the sweep
 * step falls below 1e-9 (absolute, scale-relaxed) or after 1e4 sweeps.
 */
FittedDistribution fit_pert(const ThreePointEstimate& est,
                            FitReport* report = nullptr);

/// Route by estimate kind: probability -> Beta, quantity -> PERT.
FittedDistribution fit_estimate(const ThreePointEstimate& est,
                                FitReport* report = nullptr);

double cdf(const FittedDistribution& dist, double x);
double quantile(const FittedDistribution& dist, double q);  // q in (0,1)
/// Inverse-transform sample: consumes exactly one uniform from rng.
double sample(const FittedDistribution& dist, DrawRng& rng);

double distribution_mode(const FittedDistribution& dist);
double distribution_mean(const FittedDistribution& dist);

nlohmann::json dist_to_json(const FittedDistribution& dist);
FittedDistribution dist_from_json(const nlohmann::json& j);

namespace detail {
/// Regularized incomplete beta I_x(a, b) and its inverse.
double reg_inc_beta(double a, double b, double x);
double reg_inc_beta_inv(double a, double b, double p);
/// Inverse-transform step shared by sample() and the simulation engine.
double sample_from_uniform(const FittedDistribution& dist, double u);
}  // namespace detail

}  // namespace riskquant
