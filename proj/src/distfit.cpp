#include "riskquant/distfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/beta.hpp>

namespace riskquant {

namespace detail {

namespace {
// Plain double evaluation; the default policy's long-double promotion costs
// ~7x for accuracy far beyond what the fitting tolerances use.
using FastPolicy =
    boost::math::policies::policy<boost::math::policies::promote_double<false>>;
}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return boost::math::ibeta(a, b, x, FastPolicy());
}

double reg_inc_beta_inv(double a, double b, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return boost::math::ibeta_inv(a, b, p, FastPolicy());
}

}  // namespace detail

namespace {

constexpr double kKappaLo = 2.0 + 1e-6;
constexpr double kKappaHi = 1e6;
constexpr double kCoverageTol = 1e-10;
constexpr int kBisectionCap = 200;

BetaParams beta_at_kappa(double mode, double kappa) {
    return {1.0 + mode * (kappa - 2.0), 1.0 + (1.0 - mode) * (kappa - 2.0)};
}

double beta_coverage(const BetaParams& p, double low, double high) {
    return detail::reg_inc_beta(p.alpha, p.beta, high) -
           detail::reg_inc_beta(p.alpha, p.beta, low);
}

// One-parameter boundary family: mode at 0 keeps alpha = 1 and solves the
// shape so that F(high) = (1+c)/2; mode at 1 mirrors on low. The closed
// form can land below 1, which would move the mode off the boundary, so
// the shape is clamped to [1, 1e9] and the residual reported.
FittedDistribution fit_beta_boundary(const ThreePointEstimate& est,
                                     FitReport& rep) {
    const double upper_mass = 0.5 * (1.0 + est.confidence);
    if (est.mode <= 0.0) {
        double b = 1.0;
        if (est.high > 0.0 && est.high < 1.0) {
            // Beta(1, b): F(x) = 1 - (1-x)^b
            b = std::log(1.0 - upper_mass) / std::log1p(-est.high);
        }
        const double clamped = std::clamp(b, 1.0, 1e9);
        rep.converged = clamped == b && est.high < 1.0;
        BetaParams p{1.0, clamped};
        rep.residual = std::abs(beta_coverage(p, est.low, est.high) - est.confidence);
        return p;
    }
    double a = 1.0;
    if (est.low > 0.0 && est.low < 1.0) {
        // Beta(a, 1): F(x) = x^a; want F(low) = (1-c)/2
        a = std::log(1.0 - upper_mass) / std::log(est.low);
    }
    const double clamped = std::clamp(a, 1.0, 1e9);
    rep.converged = clamped == a && est.low > 0.0;
    BetaParams p{clamped, 1.0};
    rep.residual = std::abs(beta_coverage(p, est.low, est.high) - est.confidence);
    return p;
}

}  // namespace

FittedDistribution fit_beta(const ThreePointEstimate& est, FitReport* report) {
    check_estimate(est);
    if (est.kind != EstimateKind::probability) {
        throw std::invalid_argument("fit_beta requires a probability estimate");
    }
    FitReport rep;
    if (est.degenerate()) {
        if (report) *report = rep;
        return PointMass{est.mode};
    }
    if (est.mode <= 0.0 || est.mode >= 1.0) {
        FittedDistribution d = fit_beta_boundary(est, rep);
        if (report) *report = rep;
        return d;
    }

    // Interior mode: coverage of [low, high] grows monotonically with the
    // concentration kappa, from high-low at the uniform end towards the
    // mass the family concentrates around the mode.
    double lo = kKappaLo;
    double hi = kKappaHi;
    double cov_lo = beta_coverage(beta_at_kappa(est.mode, lo), est.low, est.high);
    double cov_hi = beta_coverage(beta_at_kappa(est.mode, hi), est.low, est.high);

    double kappa;
    if (est.confidence <= cov_lo) {
        kappa = lo;
        rep.converged = std::abs(cov_lo - est.confidence) <= kCoverageTol;
        rep.residual = std::abs(cov_lo - est.confidence);
    } else if (est.confidence >= cov_hi) {
        kappa = hi;
        rep.converged = std::abs(cov_hi - est.confidence) <= kCoverageTol;
        rep.residual = std::abs(cov_hi - est.confidence);
    } else {
        double cov = cov_lo;
        kappa = lo;
        for (int i = 0; i < kBisectionCap; ++i) {
            ++rep.iterations;
            kappa = 0.5 * (lo + hi);
            cov = beta_coverage(beta_at_kappa(est.mode, kappa), est.low, est.high);
            if (std::abs(cov - est.confidence) <= kCoverageTol) break;
            if (cov < est.confidence) {
                lo = kappa;
            } else {
                hi = kappa;
            }
        }
        rep.residual = std::abs(cov - est.confidence);
        rep.converged = rep.residual <= 1e-6;
    }
    if (report) *report = rep;
    return beta_at_kappa(est.mode, kappa);
}

namespace {

struct PertShapes {
    double alpha;
    double beta;
};

PertShapes pert_shapes(const PertParams& p) {
    const double span = p.upper - p.lower;
    if (span <= 0.0) return {1.0, 1.0};
    return {1.0 + 4.0 * (p.mode - p.lower) / span,
            1.0 + 4.0 * (p.upper - p.mode) / span};
}

double pert_quantile(const PertParams& p, double q) {
    if (p.upper <= p.lower) return p.mode;
    const auto [a, b] = pert_shapes(p);
    return p.lower + (p.upper - p.lower) * detail::reg_inc_beta_inv(a, b, q);
}

// Squared residual of the central credible quantiles against the elicited
// interval.
double pert_objective(double lower, double mode, double upper, double low,
                      double high, double p_lo, double p_hi) {
    PertParams p{lower, mode, upper};
    const double r1 = pert_quantile(p, p_lo) - low;
    const double r2 = pert_quantile(p, p_hi) - high;
    return r1 * r1 + r2 * r2;
}

// Golden-section minimization on [lo, hi]; the per-coordinate objective is
// unimodal in practice (quantiles move monotonically with each bound).
template <typename F>
double golden_min(F f, double lo, double hi) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < 90 && (b - a) > 0.0; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

FittedDistribution fit_pert(const ThreePointEstimate& est, FitReport* report) {
    check_estimate(est);
    if (est.kind != EstimateKind::quantity) {
        throw std::invalid_argument("fit_pert requires a quantity estimate");
    }
    FitReport rep;
    if (est.degenerate()) {
        if (report) *report = rep;
        return PointMass{est.mode};
    }
    if (est.low <= 0.0 && est.mode <= 0.0) {
        throw std::invalid_argument(
            "PERT fit requires positive low or mode (support must stay positive)");
    }

    const double m = est.mode;
    const double p_lo = 0.5 * (1.0 - est.confidence);
    const double p_hi = 0.5 * (1.0 + est.confidence);
    const double scale = std::max({est.high, m, 1e-12});
    // Keep the floor strictly positive but never above the mode (the mode
    // can sit many orders of magnitude below the upper bound).
    const double a_floor = std::min(
        m, std::max(scale * 1e-12, std::numeric_limits<double>::min()));

    double lower = std::clamp(0.9 * est.low, a_floor, m);
    double upper = std::max(1.1 * est.high, m);
    double b_cap = m + 64.0 * std::max(est.high - m, est.high - est.low) +
                   8.0 * scale;

    const int kMaxSweeps = 10000;
    const double step_tol = std::max(1e-9, 1e-13 * scale);
    double prev_sse = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        ++rep.iterations;
        const double prev_lower = lower;
        const double prev_upper = upper;

        lower = golden_min(
            [&](double a) {
                return pert_objective(a, m, upper, est.low, est.high, p_lo, p_hi);
            },
            a_floor, m);
        upper = golden_min(
            [&](double b) {
                return pert_objective(lower, m, b, est.low, est.high, p_lo, p_hi);
            },
            m, b_cap);

        // Grow the search interval if the optimum is pressed against it.
        if (upper > b_cap - 1e-6 * (b_cap - m) && b_cap < 1e15 * scale) {
            b_cap = m + 4.0 * (b_cap - m);
            continue;
        }
        if (std::abs(lower - prev_lower) < step_tol &&
            std::abs(upper - prev_upper) < step_tol) {
            break;
        }
        // Infeasible targets can leave the sweep cycling between near-equal
        // optima; stop once the objective stops moving.
        const double sse =
            pert_objective(lower, m, upper, est.low, est.high, p_lo, p_hi);
        if (sse >= prev_sse * (1.0 - 1e-12)) {
            break;
        }
        prev_sse = sse;
    }

    lower = std::clamp(lower, a_floor, m);
    upper = std::max(upper, m);
    rep.residual = std::sqrt(
        0.5 * pert_objective(lower, m, upper, est.low, est.high, p_lo, p_hi));
    rep.converged = rep.iterations < kMaxSweeps;
    if (report) *report = rep;
    return PertParams{lower, m, upper};
}

FittedDistribution fit_estimate(const ThreePointEstimate& est, FitReport* report) {
    return est.kind == EstimateKind::probability ? fit_beta(est, report)
                                                 : fit_pert(est, report);
}

double cdf(const FittedDistribution& dist, double x) {
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return x < d.value ? 0.0 : 1.0;
            } else if constexpr (std::is_same_v<T, BetaParams>) {
                return detail::reg_inc_beta(d.alpha, d.beta, x);
            } else {
                if (d.upper <= d.lower) return x < d.mode ? 0.0 : 1.0;
                const auto [a, b] = pert_shapes(d);
                return detail::reg_inc_beta(a, b, (x - d.lower) / (d.upper - d.lower));
            }
        },
        dist);
}

double quantile(const FittedDistribution& dist, double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw std::invalid_argument("quantile level must lie in (0, 1)");
    }
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, BetaParams>) {
                return detail::reg_inc_beta_inv(d.alpha, d.beta, q);
            } else {
                return pert_quantile(d, q);
            }
        },
        dist);
}

namespace detail {

double sample_from_uniform(const FittedDistribution& dist, double u) {
    if (std::holds_alternative<PointMass>(dist)) {
        return std::get<PointMass>(dist).value;
    }
    // Clamp away from 0 so the inverse CDF stays finite.
    return quantile(dist, std::max(u, 0x1.0p-53));
}

}  // namespace detail

double sample(const FittedDistribution& dist, DrawRng& rng) {
    return detail::sample_from_uniform(dist, rng.next_double());
}

double distribution_mode(const FittedDistribution& dist) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, BetaParams>) {
                const double denom = d.alpha + d.beta - 2.0;
                if (denom <= 0.0) return 0.5;  // uniform: any value is modal
                if (d.alpha <= 1.0 && d.beta > 1.0) return 0.0;
                if (d.beta <= 1.0 && d.alpha > 1.0) return 1.0;
                return (d.alpha - 1.0) / denom;
            } else {
                return d.mode;
            }
        },
        dist);
}

double distribution_mean(const FittedDistribution& dist) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return d.value;
            } else if constexpr (std::is_same_v<T, BetaParams>) {
                return d.alpha / (d.alpha + d.beta);
            } else {
                return (d.lower + 4.0 * d.mode + d.upper) / 6.0;
            }
        },
        dist);
}

nlohmann::json dist_to_json(const FittedDistribution& dist) {
    return std::visit(
        [](const auto& d) -> nlohmann::json {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                return {{"variant", "point"}, {"value", d.value}};
            } else if constexpr (std::is_same_v<T, BetaParams>) {
                return {{"variant", "beta"}, {"alpha", d.alpha}, {"beta", d.beta}};
            } else {
                return {{"variant", "pert"},
                        {"lower", d.lower},
                        {"mode", d.mode},
                        {"upper", d.upper}};
            }
        },
        dist);
}

FittedDistribution dist_from_json(const nlohmann::json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "point") {
        return PointMass{j.at("value").get<double>()};
    }
    if (variant == "beta") {
        return BetaParams{j.at("alpha").get<double>(), j.at("beta").get<double>()};
    }
    if (variant == "pert") {
        return PertParams{j.at("lower").get<double>(), j.at("mode").get<double>(),
                          j.at("upper").get<double>()};
    }
    throw std::invalid_argument("unknown distribution variant '" + variant + "'");
}

}  // namespace riskquant
