#pragma once

#include <cstdint>
#include <random>

#include "cst/grid.hpp"

namespace cst::check {

/// Small deterministic generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    ImageGrid image(std::size_t nx, std::size_t ny, double lo = -1.0, double hi = 1.0, Bounds b = {}) {
        ImageGrid g(nx, ny, b);
        for (double& v : g.values()) v = uniform(lo, hi);
        return g;
    }
    Sinogram sinogram(const ScanGeometry& geom, double lo = -1.0, double hi = 1.0) {
        Sinogram s(geom);
        for (double& v : s.values()) v = uniform(lo, hi);
        return s;
    }

private:
    std::mt19937_64 rng_;
};

inline double rel_frobenius(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]) * (a[k] - b[k]);
        den += b[k] * b[k];
    }
    return std::sqrt(num / den);
}

} // namespace cst::check
