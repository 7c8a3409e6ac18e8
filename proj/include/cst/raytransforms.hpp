#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "cst/error.hpp"
#include "cst/grid.hpp"
#include "cst/parallel.hpp"

namespace cst {

/// Positive smooth weight w(x) on the scan lines. Empty means w == 1.
using WeightField = std::function<double(Point2)>;

namespace detail {

struct Box {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool empty = true;
};

/// Region outside of which bilinear samples of g are exactly zero: the
/// bounding box of nonzero cells grown by one cell, cut to the domain.
inline Box support_box(const ImageGrid& g) {
    std::size_t imin = g.nx(), imax = 0, jmin = g.ny(), jmax = 0;
    for (std::size_t j = 0; j < g.ny(); ++j) {
        for (std::size_t i = 0; i < g.nx(); ++i) {
            if (g(i, j) != 0.0) {
                imin = std::min(imin, i);
                imax = std::max(imax, i);
                jmin = std::min(jmin, j);
                jmax = std::max(jmax, j);
            }
        }
    }
    Box b;
    if (imin > imax) return b;
    const Bounds& d = g.bounds();
    b.xmin = std::max(d.xmin, g.x(imin) - g.dx());
    b.xmax = std::min(d.xmax, g.x(imax) + g.dx());
    b.ymin = std::max(d.ymin, g.y(jmin) - g.dy());
    b.ymax = std::min(d.ymax, g.y(jmax) + g.dy());
    b.empty = false;
    return b;
}

inline Box domain_box(const ImageGrid& g) {
    const Bounds& d = g.bounds();
    return {d.xmin, d.xmax, d.ymin, d.ymax, false};
}

/// Slab test: parameter interval where o + t d lies in the box.
inline bool clip_ray(Point2 o, Point2 d, const Box& b, double& t0, double& t1) {
    if (b.empty) return false;
    t0 = -std::numeric_limits<double>::infinity();
    t1 = std::numeric_limits<double>::infinity();
    const double lo[2] = {b.xmin, b.ymin}, hi[2] = {b.xmax, b.ymax};
    const double oo[2] = {o.x, o.y}, dd[2] = {d.x, d.y};
    for (int a = 0; a < 2; ++a) {
        if (std::abs(dd[a]) < 1e-300) {
            if (oo[a] < lo[a] || oo[a] > hi[a]) return false;
            continue;
        }
        double ta = (lo[a] - oo[a]) / dd[a], tb = (hi[a] - oo[a]) / dd[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 <= t1;
}

/// Index range [k0, k1) of midpoint samples t0 + (k + 1/2) dt that may fall in
/// [ta, tb]; widened by one sample on each side.
inline void sample_range(double t0, double dt, std::size_t n, double ta, double tb, std::size_t& k0,
                         std::size_t& k1) {
    const double a = std::floor((ta - t0) / dt - 0.5) - 1.0;
    const double b = std::ceil((tb - t0) / dt - 0.5) + 2.0;
    k0 = a <= 0.0 ? 0 : std::min<std::size_t>(n, static_cast<std::size_t>(a));
    k1 = b <= 0.0 ? 0 : std::min<std::size_t>(n, static_cast<std::size_t>(b));
}

} // namespace detail

/// Bilinear sampler plus ray quadrature over one grid. Caches the region where
/// the grid is nonzero so rays skip empty space.
class RayIntegrator {
public:
    explicit RayIntegrator(const ImageGrid& g)
        : g_(&g), box_(detail::support_box(g)), inv_dx_(1.0 / g.dx()), inv_dy_(1.0 / g.dy()),
          nx_(static_cast<long>(g.nx())), ny_(static_cast<long>(g.ny())) {}

    const ImageGrid& grid() const { return *g_; }
    const detail::Box& support() const { return box_; }

    /// Same arithmetic as sample_bilinear.
    double sample(Point2 p) const {
        if (!g_->bounds().contains(p)) return 0.0;
        return detail::bilinear_gather(g_->data().data(), nx_, ny_,
                                       detail::bilinear_stencil(g_->bounds(), inv_dx_, inv_dy_, p));
    }

    /// dt * sum_k w(p_k) f(p_k), p_k = o + (t0 + (k + 1/2) dt) d, k < n.
    double midpoint(Point2 o, Point2 d, double t0, double dt, std::size_t n, const WeightField& w = {}) const {
        double ta, tb;
        if (!detail::clip_ray(o, d, box_, ta, tb)) return 0.0;
        std::size_t k0, k1;
        detail::sample_range(t0, dt, n, ta, tb, k0, k1);
        double acc = 0.0;
        for (std::size_t k = k0; k < k1; ++k) {
            const double t = t0 + (static_cast<double>(k) + 0.5) * dt;
            const Point2 p{o.x + t * d.x, o.y + t * d.y};
            const double v = sample(p);
            acc += w ? w(p) * v : v;
        }
        return dt * acc;
    }

    /// Integral of f over the segment {x + t dir : 0 <= t <= nu}, midpoint rule
    /// with step half the pixel pitch; the last partial step is kept so that
    /// lengthening the segment only appends samples.
    double divergent_beam(Point2 x, Point2 dir, double nu) const {
        const double dt = step();
        const auto n = static_cast<std::size_t>(std::floor(nu / dt));
        double acc = midpoint(x, dir, 0.0, dt, n);
        const double rest = nu - static_cast<double>(n) * dt;
        if (rest > 1e-12 * dt) {
            const double t = static_cast<double>(n) * dt + 0.5 * rest;
            acc += rest * sample({x.x + t * dir.x, x.y + t * dir.y});
        }
        return acc;
    }

    double step() const { return 0.5 * std::min(g_->dx(), g_->dy()); }

private:
    const ImageGrid* g_;
    detail::Box box_;
    double inv_dx_, inv_dy_;
    long nx_, ny_;
};

// ---------------------------------------------------------------------------
// Weighted Radon transform

/// Largest distance from the origin to a domain corner; lines are integrated
/// over t in [-T, T].
inline double half_extent(const Bounds& b) {
    const double xs = std::max(std::abs(b.xmin), std::abs(b.xmax));
    const double ys = std::max(std::abs(b.ymin), std::abs(b.ymax));
    return std::hypot(xs, ys);
}

struct LineQuadrature {
    double t0;
    double dt;
    std::size_t n;
};

inline LineQuadrature line_quadrature(const GridShape& s) {
    const double dx = (s.bounds.xmax - s.bounds.xmin) / static_cast<double>(s.nx);
    const double dy = (s.bounds.ymax - s.bounds.ymin) / static_cast<double>(s.ny);
    const double dt = 0.5 * std::min(dx, dy);
    const double T = half_extent(s.bounds);
    return {-T, dt, static_cast<std::size_t>(std::ceil(2.0 * T / dt))};
}

namespace detail {

inline void project_column(const RayIntegrator& ri, const ScanGeometry& geom, const LineQuadrature& q,
                           std::size_t j, const WeightField& w, std::span<double> out) {
    const double th = geom.theta(j);
    const Point2 normal{std::cos(th), std::sin(th)};
    const Point2 along{-normal.y, normal.x};
    for (std::size_t i = 0; i < geom.ns; ++i) {
        const double s = geom.s(i);
        out[i] = ri.midpoint({s * normal.x, s * normal.y}, along, q.t0, q.dt, q.n, w);
    }
}

} // namespace detail

/// R_w f(s, theta) = integral of w f over {x . Theta = s}.
inline Sinogram radon_forward(const ImageGrid& f, const ScanGeometry& geom, const WeightField& w = {}) {
    geom.validate();
    Sinogram out(geom);
    const RayIntegrator ri(f);
    const auto q = line_quadrature(f.shape());
    parallel_for(geom.ntheta, [&](std::size_t j) { detail::project_column(ri, geom, q, j, w, out.column(j)); });
    return out;
}

/// Exact adjoint of radon_forward for the inner products
/// <f, h> = dx dy sum f h and <g, k> = ds dtheta sum g k.
inline ImageGrid radon_adjoint(const Sinogram& g, const GridShape& shape, const WeightField& w = {}) {
    const ScanGeometry& geom = g.geom();
    ImageGrid out(shape);
    const auto q = line_quadrature(shape);
    const Bounds& b = shape.bounds;
    const double inv_dx = 1.0 / out.dx(), inv_dy = 1.0 / out.dy();
    const auto nx = static_cast<long>(shape.nx), ny = static_cast<long>(shape.ny);
    const double scale = geom.ds() * geom.dtheta() / out.cell_area() * q.dt;
    const detail::Box domain = detail::domain_box(out);

    // Fixed angular chunking keeps the summation order independent of the
    // number of worker threads.
    constexpr std::size_t chunks = 8;
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(out.size(), 0.0));
    parallel_for(chunks, [&](std::size_t c) {
        auto& acc = partial[c];
        for (std::size_t j = c; j < geom.ntheta; j += chunks) {
            const double th = geom.theta(j);
            const Point2 normal{std::cos(th), std::sin(th)};
            const Point2 along{-normal.y, normal.x};
            for (std::size_t i = 0; i < geom.ns; ++i) {
                const double gv = g(i, j);
                if (gv == 0.0) continue;
                const double s = geom.s(i);
                const Point2 o{s * normal.x, s * normal.y};
                double ta, tb;
                if (!detail::clip_ray(o, along, domain, ta, tb)) continue;
                std::size_t k0, k1;
                detail::sample_range(q.t0, q.dt, q.n, ta, tb, k0, k1);
                for (std::size_t k = k0; k < k1; ++k) {
                    const double t = q.t0 + (static_cast<double>(k) + 0.5) * q.dt;
                    const Point2 p{o.x + t * along.x, o.y + t * along.y};
                    if (!b.contains(p)) continue;
                    const double c = scale * gv * (w ? w(p) : 1.0);
                    detail::bilinear_scatter(acc.data(), nx, ny, detail::bilinear_stencil(b, inv_dx, inv_dy, p), c);
                }
            }
        }
    });
    for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += partial[c][k];
    return out;
}

// ---------------------------------------------------------------------------
// Smoothing kernels

struct KernelSpec {
    enum class Kind { delta, disk, gaussian };
    Kind kind = Kind::disk;
    double radius = 0.02; // disk
    double sigma = 0.01;  // gaussian
    double scale = 1.0;   // total mass after normalization

    static KernelSpec delta() { return {Kind::delta, 0.02, 0.01, 1.0}; }
    static KernelSpec disk(double r) { return {Kind::disk, r, 0.01, 1.0}; }
    static KernelSpec gaussian(double s) { return {Kind::gaussian, 0.02, s, 1.0}; }

    void validate() const {
        if (kind == Kind::disk) require(radius > 0.0, "kernel radius must be positive");
        if (kind == Kind::gaussian) require(sigma > 0.0, "kernel sigma must be positive");
        require(scale > 0.0, "kernel scale must be positive");
    }

    /// Support radius in physical units (gaussian truncated at 4 sigma).
    double support_radius() const {
        switch (kind) {
        case Kind::delta: return 0.0;
        case Kind::disk: return radius;
        case Kind::gaussian: return 4.0 * sigma;
        }
        return 0.0;
    }
};

/// Kernel weights on the pixel lattice, (2 ry + 1) rows of (2 rx + 1).
struct DiscreteKernel {
    int rx = 0;
    int ry = 0;
    std::vector<double> weights{1.0};

    double at(int di, int dj) const { return weights[static_cast<std::size_t>((dj + ry) * (2 * rx + 1) + di + rx)]; }
    double sum() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

inline DiscreteKernel discretize(const KernelSpec& k, double dx, double dy) {
    k.validate();
    DiscreteKernel d;
    if (k.kind == KernelSpec::Kind::delta) {
        d.weights = {k.scale};
        return d;
    }
    const double reach = k.support_radius();
    d.rx = static_cast<int>(std::floor(reach / dx + 1e-9));
    d.ry = static_cast<int>(std::floor(reach / dy + 1e-9));
    d.weights.assign(static_cast<std::size_t>((2 * d.rx + 1) * (2 * d.ry + 1)), 0.0);
    double total = 0.0;
    for (int j = -d.ry; j <= d.ry; ++j) {
        for (int i = -d.rx; i <= d.rx; ++i) {
            const double x = i * dx, y = j * dy;
            const double r2 = x * x + y * y;
            double w = 0.0;
            if (k.kind == KernelSpec::Kind::disk)
                w = r2 <= reach * reach * (1.0 + 1e-9) ? 1.0 : 0.0;
            else
                w = r2 <= reach * reach * (1.0 + 1e-9) ? std::exp(-0.5 * r2 / (k.sigma * k.sigma)) : 0.0;
            d.weights[static_cast<std::size_t>((j + d.ry) * (2 * d.rx + 1) + i + d.rx)] = w;
            total += w;
        }
    }
    for (double& w : d.weights) w *= k.scale / total;
    return d;
}

namespace detail {

/// One output pixel of the kernel convolution; indices are clamped at the
/// domain edge so constants are reproduced.
inline double convolve_at(const ImageGrid& f, const DiscreteKernel& k, std::size_t i, std::size_t j) {
    if (k.rx == 0 && k.ry == 0) return k.weights[0] * f(i, j);
    const auto nx = static_cast<long>(f.nx()), ny = static_cast<long>(f.ny());
    double acc = 0.0;
    for (int dj = -k.ry; dj <= k.ry; ++dj) {
        const long jj = std::clamp(static_cast<long>(j) - dj, 0L, ny - 1);
        for (int di = -k.rx; di <= k.rx; ++di) {
            const double w = k.at(di, dj);
            if (w == 0.0) continue;
            const long ii = std::clamp(static_cast<long>(i) - di, 0L, nx - 1);
            acc += w * f(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        }
    }
    return acc;
}

} // namespace detail

inline ImageGrid convolve_kernel(const ImageGrid& field, const KernelSpec& k) {
    const DiscreteKernel d = discretize(k, field.dx(), field.dy());
    ImageGrid out = field.zeros_like();
    parallel_for(field.ny(), [&](std::size_t j) {
        for (std::size_t i = 0; i < field.nx(); ++i) out(i, j) = detail::convolve_at(field, d, i, j);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Divergent beam and V-line transforms

struct VLineParams {
    double a = 1.0;
    double b = 1.0;
    double psi = std::numbers::pi / 4.0;
    double nu = 4.0;
    KernelSpec kernel{};

    void validate() const {
        require(nu > 0.0, "V-line leg length must be positive");
        require(std::isfinite(psi) && std::isfinite(a) && std::isfinite(b), "V-line parameters must be finite");
        kernel.validate();
    }
};

/// Leg towards the source array, (cos(phi + 2 psi - pi/2), sin(...)).
inline Point2 source_leg(double phi, double psi) { return unit_vector(phi + 2.0 * psi - std::numbers::pi / 2.0); }
/// Leg towards the detector, (cos(phi - pi/2), sin(phi - pi/2)).
inline Point2 detector_leg(double phi) { return unit_vector(phi - std::numbers::pi / 2.0); }

/// Integral of f along {x + t (cos a, sin a) : 0 <= t <= nu}.
inline double divergent_beam(const ImageGrid& f, Point2 x, double direction, double nu) {
    require(nu > 0.0, "leg length must be positive");
    return RayIntegrator(f).divergent_beam(x, unit_vector(direction), nu);
}

inline double vline(const RayIntegrator& ri, Point2 x, double phi, const VLineParams& p) {
    double v = 0.0;
    if (p.a != 0.0) v += p.a * ri.divergent_beam(x, source_leg(phi, p.psi), p.nu);
    if (p.b != 0.0) v += p.b * ri.divergent_beam(x, detector_leg(phi), p.nu);
    return v;
}

inline double vline(const ImageGrid& f, Point2 x, double phi, const VLineParams& p) {
    p.validate();
    return vline(RayIntegrator(f), x, phi, p);
}

namespace detail {

/// Smoothed V-line values at the pixels flagged in `wanted` (all pixels when
/// empty). Only the pointwise transform inside the kernel footprint of a
/// wanted pixel is evaluated; other outputs are left at zero.
inline ImageGrid smoothed_vline_masked(const RayIntegrator& ri, double phi, const VLineParams& p,
                                       const DiscreteKernel& k, const std::vector<char>& wanted,
                                       bool parallel = true) {
    const ImageGrid& f = ri.grid();
    const std::size_t nx = f.nx(), ny = f.ny();
    const bool all = wanted.empty();
    std::vector<char> need;
    if (!all) {
        need.assign(nx * ny, 0);
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                if (!wanted[j * nx + i]) continue;
                const std::size_t j0 = j >= static_cast<std::size_t>(k.ry) ? j - k.ry : 0;
                const std::size_t j1 = std::min(ny - 1, j + k.ry);
                const std::size_t i0 = i >= static_cast<std::size_t>(k.rx) ? i - k.rx : 0;
                const std::size_t i1 = std::min(nx - 1, i + k.rx);
                for (std::size_t jj = j0; jj <= j1; ++jj)
                    for (std::size_t ii = i0; ii <= i1; ++ii) need[jj * nx + ii] = 1;
            }
        }
    }
    auto rows = [&](auto&& body) {
        if (parallel)
            parallel_for(ny, body);
        else
            for (std::size_t j = 0; j < ny; ++j) body(j);
    };
    ImageGrid point = f.zeros_like();
    const Point2 leg_a = source_leg(phi, p.psi), leg_b = detector_leg(phi);
    rows([&](std::size_t j) {
        for (std::size_t i = 0; i < nx; ++i) {
            if (!all && !need[j * nx + i]) continue;
            const Point2 x = f.center(i, j);
            double v = 0.0;
            if (p.a != 0.0) v += p.a * ri.divergent_beam(x, leg_a, p.nu);
            if (p.b != 0.0) v += p.b * ri.divergent_beam(x, leg_b, p.nu);
            point(i, j) = v;
        }
    });
    if (k.rx == 0 && k.ry == 0 && k.weights[0] == 1.0) return point;
    ImageGrid out = f.zeros_like();
    rows([&](std::size_t j) {
        for (std::size_t i = 0; i < nx; ++i) {
            if (!all && !wanted[j * nx + i]) continue;
            out(i, j) = convolve_at(point, k, i, j);
        }
    });
    return out;
}

} // namespace detail

/// Pointwise V-line transform at every grid point for fixed phi, convolved
/// with the kernel. This field is the exponent of the forward model.
inline ImageGrid smoothed_vline_field(const ImageGrid& f, double phi, const VLineParams& p) {
    p.validate();
    const RayIntegrator ri(f);
    return detail::smoothed_vline_masked(ri, phi, p, discretize(p.kernel, f.dx(), f.dy()), {});
}

} // namespace cst
