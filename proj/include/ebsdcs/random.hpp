#ifndef EBSDCS_RANDOM_HPP
#define EBSDCS_RANDOM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace ebsdcs {

// All samplers draw from one 64-bit Mersenne Twister so that a seed fully
// determines every run (for a fixed standard library).
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Gamma(shape, rate) draw; the result has mean shape / rate.
inline double sample_gamma(Rng& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

/// log of a Gamma(shape, 1) draw. Shapes below one use the identity
/// G(a) = G(a + 1) * U^(1/a) evaluated in log space, which does not
/// underflow for tiny shapes.
inline double sample_log_gamma(Rng& rng, double shape) {
    if (shape <= 0.0) return -std::numeric_limits<double>::infinity();
    if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
    const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
    double u = uniform01(rng);
    u = std::max(u, std::numeric_limits<double>::min());
    return std::log(g) + std::log(u) / shape;
}

/// Beta(a, b) draw via the ratio of two gamma variates. A non-positive
/// parameter degenerates the distribution to the opposite end point.
inline double sample_beta(Rng& rng, double a, double b) {
    if (a <= 0.0 && b <= 0.0) return 0.5;
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return 1.0;
    const double lx = sample_log_gamma(rng, a);
    const double ly = sample_log_gamma(rng, b);
    const double m = std::max(lx, ly);
    const double log_sum = m + std::log(std::exp(lx - m) + std::exp(ly - m));
    return std::clamp(std::exp(lx - log_sum), 0.0, 1.0);
}

} // namespace ebsdcs

#endif
