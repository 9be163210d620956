// Gaussian tail arithmetic and the per-component information statistics of
// the innovation-threshold scheduler.
//
//   mu     = P(|eps| > eta) = 2 Q(eta)                 high-power rate
//   nu     = sqrt(2/pi) eta exp(-eta^2/2) / (1 - 2 Q(eta))
//          = 1 - E[eps^2 | |eps| <= eta]               info kept by a drop
//   xi     = beta + (1 - beta) nu                      mean update weight, low power
//   lambda = mu + (1 - mu) xi                          mean update weight overall
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pskf {

/// Standard normal upper tail Q(x) = P(Z > x).
inline double q_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// P(|Z| <= x) = 1 - 2 Q(x), computed without cancellation near zero.
inline double central_mass(double x) { return std::erf(x / std::numbers::sqrt2); }

/// 1 - E[Z^2 | |Z| <= eta]. Equals 1 at eta = 0 (limit) and decreases to 0.
inline double truncated_variance_deficit(double eta) {
    if (eta <= 0.0) return 1.0;
    const double mass = central_mass(eta);
    // Taylor branch keeps full precision where eta/mass is 0/0-like.
    if (eta < 1e-4) return 1.0 - eta * eta / 3.0;
    return std::sqrt(2.0 / std::numbers::pi) * eta * std::exp(-0.5 * eta * eta) / mass;
}

struct ComponentStats {
    double eta = 0.0;
    double beta = 0.5;
    double mu = 1.0;
    double nu = 1.0;
    double xi = 1.0;
    double lambda = 1.0;
};

inline ComponentStats component_stats(double eta, double beta) {
    if (!(eta >= 0.0) || !std::isfinite(eta))
        throw std::invalid_argument("component_stats: eta must be finite and >= 0, got " + std::to_string(eta));
    if (!(beta > 0.0 && beta < 1.0))
        throw std::invalid_argument("component_stats: beta must lie in (0, 1), got " + std::to_string(beta));
    ComponentStats s;
    s.eta = eta;
    s.beta = beta;
    s.mu = 2.0 * q_tail(eta);
    s.nu = truncated_variance_deficit(eta);
    s.xi = beta + (1.0 - beta) * s.nu;
    s.lambda = s.mu + (1.0 - s.mu) * s.xi;
    return s;
}

/// Inverts eta -> lambda(eta, beta) by bisection. lambda is strictly
/// decreasing from 1 at eta = 0 towards beta as eta grows.
inline double solve_eta_for_lambda(double lambda_target, double beta) {
    if (!(beta > 0.0 && beta < 1.0))
        throw std::invalid_argument("solve_eta_for_lambda: beta must lie in (0, 1), got " + std::to_string(beta));
    if (!(lambda_target > beta && lambda_target <= 1.0))
        throw std::out_of_range("solve_eta_for_lambda: lambda target " + std::to_string(lambda_target) +
                                " outside achievable range (" + std::to_string(beta) + ", 1]");
    if (lambda_target == 1.0) return 0.0;

    auto lambda_at = [beta](double eta) { return component_stats(eta, beta).lambda; };
    double lo = 0.0;
    double hi = 1.0;
    while (lambda_at(hi) > lambda_target && hi < 64.0) hi *= 2.0;
    // Past eta ~ 40 lambda equals beta to double precision; any eta there is
    // within tolerance of a target that close to beta.
    if (lambda_at(hi) > lambda_target) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (lambda_at(mid) > lambda_target)
            lo = mid;
        else
            hi = mid;
    }
    const double l_lo = lambda_at(lo) - lambda_target;
    const double l_hi = lambda_target - lambda_at(hi);
    return l_lo < l_hi ? lo : hi;
}

}  // namespace pskf
