#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "cst/error.hpp"
#include "cst/forward.hpp"
#include "cst/grid.hpp"

namespace cst {

/// Binary per-pixel mask on an image grid.
struct EdgeMap {
    GridShape shape;
    std::vector<std::uint8_t> mask;

    explicit EdgeMap(GridShape s = {}) : shape(s), mask(s.nx * s.ny, 0) {}
    std::size_t nx() const { return shape.nx; }
    std::size_t ny() const { return shape.ny; }
    std::uint8_t& operator()(std::size_t i, std::size_t j) { return mask[j * shape.nx + i]; }
    std::uint8_t operator()(std::size_t i, std::size_t j) const { return mask[j * shape.nx + i]; }
    std::size_t count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
    ImageGrid to_image() const {
        ImageGrid g(shape);
        for (std::size_t k = 0; k < mask.size(); ++k) g[k] = mask[k];
        return g;
    }
    static EdgeMap from_image(const ImageGrid& g) {
        EdgeMap e(g.shape());
        for (std::size_t k = 0; k < g.size(); ++k) {
            require(g[k] == 0.0 || g[k] == 1.0, "mask image must be binary");
            e.mask[k] = g[k] != 0.0;
        }
        return e;
    }
};

struct SupportMask {
    EdgeMap mask;
    std::size_t component_count = 0; // 8-connected components of the support
    bool closed = false;             // some non-edge pixel was enclosed by the boundary
    bool touches_border = false;
};

struct EdgeConfig {
    double low_quantile = 0.7;
    double high_quantile = 0.9;
    double sigma = 1.0;            // Gaussian pre-smoothing, pixels
    double relative_floor = 0.3;   // thresholds never drop below this fraction of the peak gradient
    std::size_t min_component = 0; // edge components with fewer pixels are dropped

    void validate() const {
        require(low_quantile >= 0.0 && low_quantile < high_quantile && high_quantile <= 1.0,
                "edge thresholds must satisfy 0 <= low < high <= 1");
        require(sigma >= 0.0, "smoothing sigma must be non-negative");
        require(relative_floor >= 0.0 && relative_floor < 1.0, "relative floor must lie in [0, 1)");
    }
};

namespace detail {

inline ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double total = 0.0;
    for (int t = -r; t <= r; ++t) total += k[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
    for (double& v : k) v /= total;
    const long nx = static_cast<long>(img.nx()), ny = static_cast<long>(img.ny());
    ImageGrid tmp = img.zeros_like(), out = img.zeros_like();
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) acc += k[t + r] * img(std::clamp(i + t, 0L, nx - 1), j);
            tmp(i, j) = acc;
        }
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp(i, std::clamp(j + t, 0L, ny - 1));
            out(i, j) = acc;
        }
    return out;
}

inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
    return v[k];
}

template <class Pred>
std::vector<std::vector<std::size_t>> components(std::size_t nx, std::size_t ny, Pred in, bool eight) {
    std::vector<int> label(nx * ny, -1);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < nx * ny; ++start) {
        if (label[start] >= 0 || !in(start)) continue;
        const int id = static_cast<int>(out.size());
        out.emplace_back();
        std::deque<std::size_t> queue{start};
        label[start] = id;
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            out.back().push_back(p);
            const long i = static_cast<long>(p % nx), j = static_cast<long>(p / nx);
            for (long dj = -1; dj <= 1; ++dj)
                for (long di = -1; di <= 1; ++di) {
                    if ((di == 0 && dj == 0) || (!eight && di != 0 && dj != 0)) continue;
                    const long a = i + di, b = j + dj;
                    if (a < 0 || b < 0 || a >= static_cast<long>(nx) || b >= static_cast<long>(ny)) continue;
                    const std::size_t q = static_cast<std::size_t>(b) * nx + static_cast<std::size_t>(a);
                    if (label[q] < 0 && in(q)) {
                        label[q] = id;
                        queue.push_back(q);
                    }
                }
        }
    }
    return out;
}

} // namespace detail

/// Canny-style edges: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression, and hysteresis between gradient-magnitude quantiles.
inline EdgeMap detect_edges(const ImageGrid& img, const EdgeConfig& cfg = {}) {
    cfg.validate();
    const ImageGrid s = detail::gaussian_blur(img, cfg.sigma);
    const long nx = static_cast<long>(img.nx()), ny = static_cast<long>(img.ny());
    auto at = [&](long i, long j) { return s(std::clamp(i, 0L, nx - 1), std::clamp(j, 0L, ny - 1)); };
    ImageGrid gx = img.zeros_like(), gy = img.zeros_like(), mag = img.zeros_like();
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            gx(i, j) = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1) - at(i - 1, j - 1) -
                        2.0 * at(i - 1, j) - at(i - 1, j + 1)) / 8.0;
            gy(i, j) = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1) - at(i - 1, j - 1) -
                        2.0 * at(i, j - 1) - at(i + 1, j - 1)) / 8.0;
            mag(i, j) = std::hypot(gx(i, j), gy(i, j));
        }
    EdgeMap out(img.shape());
    const double peak = max_abs(mag.values());
    if (peak == 0.0 || !std::isfinite(peak)) return out;

    // magnitude at a fractional pixel position, zero outside the grid
    auto mag_at = [&](double u, double v) {
        const double fu = std::floor(u), fv = std::floor(v);
        const long i0 = static_cast<long>(fu), j0 = static_cast<long>(fv);
        const double wu = u - fu, wv = v - fv;
        auto m = [&](long a, long b) { return (a < 0 || b < 0 || a >= nx || b >= ny) ? 0.0 : mag(a, b); };
        return (1 - wv) * ((1 - wu) * m(i0, j0) + wu * m(i0 + 1, j0)) +
               wv * ((1 - wu) * m(i0, j0 + 1) + wu * m(i0 + 1, j0 + 1));
    };
    ImageGrid thin = img.zeros_like();
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            const double m = mag(i, j);
            if (m == 0.0) continue;
            // compare against the interpolated magnitude one pixel along the gradient
            const double ux = gx(i, j) / m, uy = gy(i, j) / m;
            const double ahead = mag_at(static_cast<double>(i) + ux, static_cast<double>(j) + uy);
            const double behind = mag_at(static_cast<double>(i) - ux, static_cast<double>(j) - uy);
            if (m > behind && m >= ahead) thin(i, j) = m;
        }

    const std::vector<double> all(mag.values().begin(), mag.values().end());
    const double hi = std::max(detail::quantile(all, cfg.high_quantile), cfg.relative_floor * peak);
    const double lo = std::min(hi, std::max(detail::quantile(all, cfg.low_quantile), 0.5 * cfg.relative_floor * peak));
    const auto weak = [&](std::size_t p) { return thin[p] >= lo && thin[p] > 0.0; };
    for (const auto& comp : detail::components(img.nx(), img.ny(), weak, true)) {
        bool strong = false;
        for (std::size_t p : comp) strong = strong || thin[p] >= hi;
        if (!strong || comp.size() < cfg.min_component) continue;
        for (std::size_t p : comp) out.mask[p] = 1;
    }
    return out;
}

namespace detail {

// Digital disk di^2 + dj^2 <= r(r + 1), which also contains the knight moves at r = 2.
inline std::vector<std::array<int, 2>> disk_offsets(int radius) {
    std::vector<std::array<int, 2>> o;
    for (int dj = -radius; dj <= radius; ++dj)
        for (int di = -radius; di <= radius; ++di)
            if (di * di + dj * dj <= radius * (radius + 1)) o.push_back({di, dj});
    return o;
}

/// Binary dilation (erode = false) or erosion with a disk. Pixels outside the
/// grid count as background for dilation and as foreground for erosion.
inline EdgeMap morph(const EdgeMap& in, int radius, bool erode) {
    const auto off = disk_offsets(radius);
    const long nx = static_cast<long>(in.nx()), ny = static_cast<long>(in.ny());
    EdgeMap out(in.shape);
    for (long j = 0; j < ny; ++j)
        for (long i = 0; i < nx; ++i) {
            bool v = erode;
            for (const auto& o : off) {
                const long a = i + o[0], b = j + o[1];
                const bool inside = a >= 0 && b >= 0 && a < nx && b < ny;
                const bool fg = inside ? in(a, b) != 0 : erode;
                if (erode && !fg) {
                    v = false;
                    break;
                }
                if (!erode && fg) {
                    v = true;
                    break;
                }
            }
            out(i, j) = v;
        }
    return out;
}

} // namespace detail

SupportMask fill_support(const EdgeMap& e);

/// Closes gaps of up to 2 * radius pixels in a boundary curve. The region the
/// dilated curve encloses is hole-filled and eroded again (a disk closing of
/// the enclosed region); the returned map is the input plus the boundary of
/// that region. A plain closing of a one-pixel curve cannot bridge its gaps.
inline EdgeMap close_boundary(const EdgeMap& e, int radius) {
    require(radius >= 1, "closing radius must be >= 1");
    const EdgeMap region = detail::morph(fill_support(detail::morph(e, radius, false)).mask, radius, true);
    EdgeMap out = e;
    const std::size_t nx = e.nx(), ny = e.ny();
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            if (!region(i, j)) continue;
            const bool edge = i == 0 || j == 0 || i + 1 == nx || j + 1 == ny || !region(i - 1, j) ||
                              !region(i + 1, j) || !region(i, j - 1) || !region(i, j + 1);
            if (edge) out(i, j) = 1;
        }
    return out;
}

/// Flood fill from the image border through non-edge pixels (4-connected);
/// the support is every pixel the fill does not reach.
inline SupportMask fill_support(const EdgeMap& e) {
    const std::size_t nx = e.nx(), ny = e.ny();
    std::vector<std::uint8_t> reached(nx * ny, 0);
    std::deque<std::size_t> queue;
    auto seed = [&](std::size_t i, std::size_t j) {
        const std::size_t p = j * nx + i;
        if (!e.mask[p] && !reached[p]) {
            reached[p] = 1;
            queue.push_back(p);
        }
    };
    for (std::size_t i = 0; i < nx; ++i) {
        seed(i, 0);
        seed(i, ny - 1);
    }
    for (std::size_t j = 0; j < ny; ++j) {
        seed(0, j);
        seed(nx - 1, j);
    }
    while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        const std::size_t i = p % nx, j = p / nx;
        if (i > 0) seed(i - 1, j);
        if (i + 1 < nx) seed(i + 1, j);
        if (j > 0) seed(i, j - 1);
        if (j + 1 < ny) seed(i, j + 1);
    }
    SupportMask s{EdgeMap(e.shape), 0, false, false};
    for (std::size_t p = 0; p < nx * ny; ++p) {
        s.mask.mask[p] = !reached[p];
        if (!reached[p] && !e.mask[p]) s.closed = true;
    }
    for (std::size_t i = 0; i < nx; ++i) s.touches_border = s.touches_border || s.mask(i, 0) || s.mask(i, ny - 1);
    for (std::size_t j = 0; j < ny; ++j) s.touches_border = s.touches_border || s.mask(0, j) || s.mask(nx - 1, j);
    s.component_count =
        detail::components(nx, ny, [&](std::size_t p) { return s.mask.mask[p] != 0; }, true).size();
    return s;
}

/// Fraction of pixels on which two binary masks agree.
inline double p_metric(const EdgeMap& a, const EdgeMap& b) {
    require(a.shape == b.shape, "masks must share the grid");
    std::size_t same = 0;
    for (std::size_t k = 0; k < a.mask.size(); ++k) same += (a.mask[k] != 0) == (b.mask[k] != 0);
    return static_cast<double>(same) / static_cast<double>(a.mask.size());
}

// ---------------------------------------------------------------------------
// Density estimation

struct DensityEstimate {
    double ne_hat = 0.0;
    std::vector<double> ne_grid;
    std::vector<double> residuals; // ||R(ne chi) - b||^2 on ne_grid
    bool refined = false;
};

/// Number of strict interior local minima plus minima at the ends of a curve.
inline std::size_t count_local_minima(const std::vector<double>& r) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const bool left = k == 0 || r[k] < r[k - 1];
        const bool right = k + 1 == r.size() || r[k] < r[k + 1];
        n += left && right;
    }
    return n;
}

/// Least-squares fit of the single density ne in f = ne * indicator(Omega_hat):
/// grid scan over [0, u_max], then golden-section refinement (tolerance 1e-3)
/// on the cells around the grid minimum.
inline DensityEstimate estimate_density(const EdgeMap& omega_hat, const Sinogram& b, const PhysicsParams& phys,
                                        const VLineParams& vp, double u_max, std::size_t n_grid,
                                        bool refine = true, const WeightField& w = {}) {
    require(u_max > 0.0, "u_max must be positive");
    require(n_grid >= 3, "n_grid must be >= 3");
    require(omega_hat.count() > 0, "support mask is empty");
    const FixedSupportModel model(omega_hat.to_image(), b.geom(), phys, vp, w);
    auto residual = [&](double ne) {
        const auto m = model.evaluate(ne);
        double acc = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k) acc += (m[k] - b[k]) * (m[k] - b[k]);
        return acc;
    };
    DensityEstimate est;
    for (std::size_t k = 0; k < n_grid; ++k) {
        const double ne = u_max * static_cast<double>(k) / static_cast<double>(n_grid - 1);
        est.ne_grid.push_back(ne);
        est.residuals.push_back(residual(ne));
    }
    const auto best = static_cast<std::size_t>(
        std::min_element(est.residuals.begin(), est.residuals.end()) - est.residuals.begin());
    est.ne_hat = est.ne_grid[best];
    if (!refine) return est;
    double lo = est.ne_grid[best == 0 ? 0 : best - 1];
    double hi = est.ne_grid[std::min(best + 1, n_grid - 1)];
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
    double fc = residual(c), fd = residual(d);
    while (hi - lo > 1e-3) {
        if (fc <= fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = residual(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = residual(d);
        }
    }
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) <= est.residuals[best]) est.ne_hat = mid;
    est.refined = true;
    return est;
}

} // namespace cst
