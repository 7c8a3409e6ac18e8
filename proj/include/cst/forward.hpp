#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "cst/error.hpp"
#include "cst/grid.hpp"
#include "cst/parallel.hpp"
#include "cst/physics.hpp"
#include "cst/raytransforms.hpp"

namespace cst {

/// V-line parameters that share a, b and psi with the physics description.
inline VLineParams make_vline_params(const PhysicsParams& phys, KernelSpec kernel = {}, double nu = 4.0) {
    return {phys.a, phys.b, phys.psi, nu, kernel};
}

namespace detail {

inline void check_consistent(const PhysicsParams& phys, const VLineParams& vp) {
    phys.validate();
    vp.validate();
    require(phys.a == vp.a && phys.b == vp.b && phys.psi == vp.psi,
            "V-line parameters must share a, b and psi with the physics parameters");
}

inline std::vector<char> nonzero_mask(const ImageGrid& f) {
    std::vector<char> m(f.size(), 0);
    for (std::size_t k = 0; k < f.size(); ++k) m[k] = f[k] != 0.0;
    return m;
}

} // namespace detail

/// Non-linear Compton data
///   Rf(s, theta) = lambda * integral over L(s, theta) of w f exp(-Vtilde f(x, theta)) dl.
/// The exponent field is evaluated once per angle, then shared by all offsets.
inline Sinogram compton_forward(const ImageGrid& f, const ScanGeometry& geom, const PhysicsParams& phys,
                                const VLineParams& vp, const WeightField& w = {}) {
    detail::check_consistent(phys, vp);
    geom.validate();
    for (double v : f.values()) require(v >= 0.0, "compton_forward: density must be non-negative");
    const double lambda = lambda_weight(phys);
    const RayIntegrator ri(f);
    const DiscreteKernel k = discretize(vp.kernel, f.dx(), f.dy());
    const auto wanted = detail::nonzero_mask(f);
    const auto q = line_quadrature(f.shape());
    Sinogram out(geom);
    parallel_for(geom.ntheta, [&](std::size_t j) {
        const ImageGrid v = detail::smoothed_vline_masked(ri, geom.theta(j), vp, k, wanted, false);
        ImageGrid h = f.zeros_like();
        for (std::size_t p = 0; p < f.size(); ++p)
            if (wanted[p]) h[p] = f[p] * std::exp(-v[p]);
        const RayIntegrator rh(h);
        auto col = out.column(j);
        detail::project_column(rh, geom, q, j, w, col);
        for (double& c : col) c *= lambda;
    });
    return out;
}

/// Forward model for f = n_e * indicator(Omega) with Omega fixed. The exponent
/// is linear in n_e, so the smoothed V-line field of the indicator is computed
/// once per angle and reused for every density value.
class FixedSupportModel {
public:
    FixedSupportModel(const ImageGrid& omega_mask, const ScanGeometry& geom, const PhysicsParams& phys,
                      const VLineParams& vp, WeightField w = {}, std::vector<std::size_t> columns = {})
        : mask_(omega_mask.zeros_like()), geom_(geom), w_(std::move(w)) {
        detail::check_consistent(phys, vp);
        geom.validate();
        lambda_ = lambda_weight(phys);
        for (std::size_t p = 0; p < mask_.size(); ++p) {
            require(omega_mask[p] == 0.0 || omega_mask[p] == 1.0, "support mask must be binary");
            mask_[p] = omega_mask[p];
            if (omega_mask[p] != 0.0) pixels_.push_back(p);
        }
        if (columns.empty()) {
            columns.resize(geom.ntheta);
            for (std::size_t j = 0; j < geom.ntheta; ++j) columns[j] = j;
        }
        columns_ = std::move(columns);
        const RayIntegrator ri(mask_);
        const DiscreteKernel k = discretize(vp.kernel, mask_.dx(), mask_.dy());
        const auto wanted = detail::nonzero_mask(mask_);
        exponent_.assign(columns_.size(), std::vector<double>(pixels_.size(), 0.0));
        parallel_for(columns_.size(), [&](std::size_t c) {
            const ImageGrid v = detail::smoothed_vline_masked(ri, geom_.theta(columns_[c]), vp, k, wanted, false);
            for (std::size_t n = 0; n < pixels_.size(); ++n) exponent_[c][n] = v[pixels_[n]];
        });
    }

    const ImageGrid& mask() const { return mask_; }
    std::size_t support_size() const { return pixels_.size(); }
    const std::vector<std::size_t>& columns() const { return columns_; }

    /// Rf for f = ne * indicator, restricted to the selected offsets (all when
    /// `rows` is empty) of the modelled columns. Output is ordered column-major
    /// like a Sinogram restricted to those columns.
    std::vector<double> evaluate(double ne, const std::vector<std::size_t>& rows = {}) const {
        const std::size_t nrow = rows.empty() ? geom_.ns : rows.size();
        std::vector<double> out(columns_.size() * nrow, 0.0);
        if (ne == 0.0 || pixels_.empty()) return out;
        const auto q = line_quadrature(mask_.shape());
        parallel_for(columns_.size(), [&](std::size_t c) {
            ImageGrid h = mask_.zeros_like();
            for (std::size_t n = 0; n < pixels_.size(); ++n) h[pixels_[n]] = ne * std::exp(-ne * exponent_[c][n]);
            const RayIntegrator rh(h);
            const double th = geom_.theta(columns_[c]);
            const Point2 normal{std::cos(th), std::sin(th)};
            const Point2 along{-normal.y, normal.x};
            for (std::size_t r = 0; r < nrow; ++r) {
                const double s = geom_.s(rows.empty() ? r : rows[r]);
                out[c * nrow + r] =
                    lambda_ * rh.midpoint({s * normal.x, s * normal.y}, along, q.t0, q.dt, q.n, w_);
            }
        });
        return out;
    }

    Sinogram sinogram(double ne) const {
        require(columns_.size() == geom_.ntheta, "model does not cover every angle");
        return Sinogram(geom_, evaluate(ne));
    }

private:
    ImageGrid mask_;
    ScanGeometry geom_;
    WeightField w_;
    double lambda_ = 1.0;
    std::vector<std::size_t> pixels_;
    std::vector<std::size_t> columns_;
    std::vector<std::vector<double>> exponent_;
};

// ---------------------------------------------------------------------------
// Noise

/// Inverse of the standard normal CDF. Acklam's rational approximation
/// followed by one Halley step against erfc, accurate to a few ulp.
inline double inverse_normal_cdf(double p) {
    require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Portable N(0,1) stream: std::mt19937_64 (fully specified by the standard),
/// 53-bit uniforms on the open interval (0,1), inverse-CDF transform.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
    double operator()() { return inverse_normal_cdf(uniform()); }

private:
    std::mt19937_64 engine_;
};

/// b + gamma * ||b|| / sqrt(k) * eta, eta i.i.d. standard normal.
inline Sinogram add_noise(const Sinogram& b, double gamma, std::uint64_t seed) {
    require(gamma >= 0.0, "noise level must be non-negative");
    Sinogram out = b;
    if (gamma == 0.0) return out;
    const double sigma = gamma * norm2(b.values()) / std::sqrt(static_cast<double>(b.size()));
    NormalStream eta(seed);
    for (double& v : out.values()) v += sigma * eta();
    return out;
}

// ---------------------------------------------------------------------------
// Density response

struct ProbeLine {
    std::size_t s_index;
    std::size_t theta_index;
};

/// Near-tangent probe lines on the source side of Omega: for every
/// `theta_stride`-th angle, offsets within `width_pixels` pixel pitches below
/// the largest projection max over Omega of x . Theta.
inline std::vector<ProbeLine> tangent_probes(const ImageGrid& omega_mask, const ScanGeometry& geom,
                                             std::size_t theta_stride = 30, double width_pixels = 2.0) {
    require(theta_stride >= 1, "theta stride must be >= 1");
    std::vector<ProbeLine> probes;
    const double width = width_pixels * std::min(omega_mask.dx(), omega_mask.dy());
    for (std::size_t j = 0; j < geom.ntheta; j += theta_stride) {
        const double th = geom.theta(j);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < omega_mask.ny(); ++y)
            for (std::size_t x = 0; x < omega_mask.nx(); ++x)
                if (omega_mask(x, y) != 0.0)
                    top = std::max(top, omega_mask.x(x) * std::cos(th) + omega_mask.y(y) * std::sin(th));
        if (!std::isfinite(top)) continue;
        // Lines at s <= top still pass through support pixel centers.
        const double hi = top;
        for (std::size_t i = 0; i < geom.ns; ++i) {
            const double s = geom.s(i);
            if (s <= hi && s >= hi - width) probes.push_back({i, j});
        }
    }
    return probes;
}

struct DensityResponse {
    double ne;
    std::vector<double> values; // one per probe line
};

/// Rf(ne * indicator) at the probe lines for each density in ne_grid.
inline std::vector<DensityResponse> density_response_curve(const ImageGrid& omega_mask, const ScanGeometry& geom,
                                                           const PhysicsParams& phys, const VLineParams& vp,
                                                           const std::vector<double>& ne_grid,
                                                           const std::vector<ProbeLine>& probes,
                                                           const WeightField& w = {}) {
    for (double ne : ne_grid) require(ne >= 0.0, "densities must be non-negative");
    std::vector<std::size_t> columns;
    for (const auto& p : probes) {
        require(p.s_index < geom.ns && p.theta_index < geom.ntheta, "probe outside the scan geometry");
        if (std::find(columns.begin(), columns.end(), p.theta_index) == columns.end()) columns.push_back(p.theta_index);
    }
    const FixedSupportModel model(omega_mask, geom, phys, vp, w, columns);
    std::vector<DensityResponse> out;
    for (double ne : ne_grid) {
        const auto data = model.evaluate(ne);
        DensityResponse r{ne, {}};
        for (const auto& p : probes) {
            const auto c = static_cast<std::size_t>(
                std::find(columns.begin(), columns.end(), p.theta_index) - columns.begin());
            r.values.push_back(data[c * geom.ns + p.s_index]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace cst
