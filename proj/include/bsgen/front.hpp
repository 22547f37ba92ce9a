#pragma once

#include <bsgen/error.hpp>
#include <bsgen/scaling.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace bsgen {

/// b = log(24000 T / (delta^2 eps)).
inline double b_constant(double delta, double eps, double T) {
    if (!(delta > 0.0) || !(eps > 0.0) || !(T > 0.0))
        throw ConfigError("b needs positive delta, epsilon and T");
    return std::log(24000.0 * T / (delta * delta * eps));
}

/// Constants attached to the emergence of type j at tau_j.
struct FrontConstants {
    std::int32_t j = 0;
    double tau = 0;
    double mean_at_tau = 0;
    double q_star = 0;
    double q = 1;          ///< max(1, q_star)
    bool window = false;   ///< tau_j fell in a_N +- 2 a_N / k_N, so q_star = j - k_N
    double xi = 0;         ///< end of the early-mutation window
    double gamma = 0;      ///< tau + a_N
    double tau_prime = 0;  ///< tau + 3 log(1/(s q)) / (s q)
    double b = 0;
};

inline FrontConstants front_constants_at(std::int32_t j, double tau, double mean_at_tau, const ScaleConstants& sc,
                                         double s, double b) {
    if (!(s > 0.0))
        throw ArgumentError("front constants need s > 0");
    FrontConstants f;
    f.j = j;
    f.tau = tau;
    f.mean_at_tau = mean_at_tau;
    f.b = b;
    const double half = 2.0 * sc.a_N / sc.k_N;
    f.window = tau >= sc.a_N - half && tau <= sc.a_N + half;
    f.q_star = f.window ? static_cast<double>(j) - sc.k_N : static_cast<double>(j) - mean_at_tau;
    f.q = std::max(1.0, f.q_star);
    const double sq = s * f.q;
    f.xi = std::max(tau, tau + std::log(1.0 / sq) / sq + b / sq);
    f.gamma = tau + sc.a_N;
    f.tau_prime = tau + 3.0 * std::log(1.0 / sq) / sq;
    return f;
}

} // namespace bsgen
