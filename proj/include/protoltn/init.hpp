#pragma once

// Parameter initialization helpers.

#include <cstdint>
#include <random>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

// Normal(0, stddev^2) samples with values beyond two standard deviations
// redrawn.  Deterministic for a given seed.
inline std::vector<double> truncated_normal(std::size_t n, double stddev, std::uint64_t seed) {
    if (stddev <= 0.0) throw DomainError("truncated_normal: stddev must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> out(n);
    const double bound = 2.0 * stddev;
    for (std::size_t i = 0; i < n; ++i) {
        double v = dist(rng);
        while (v < -bound || v > bound) v = dist(rng);
        out[i] = v;
    }
    return out;
}

inline std::vector<double> truncated_normal(std::size_t n, double stddev, std::mt19937_64& rng) {
    if (stddev <= 0.0) throw DomainError("truncated_normal: stddev must be positive");
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> out(n);
    const double bound = 2.0 * stddev;
    for (std::size_t i = 0; i < n; ++i) {
        double v = dist(rng);
        while (v < -bound || v > bound) v = dist(rng);
        out[i] = v;
    }
    return out;
}

}  // namespace protoltn
