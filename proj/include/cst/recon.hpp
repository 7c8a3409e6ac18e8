#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cst/error.hpp"
#include "cst/grid.hpp"
#include "cst/raytransforms.hpp"

namespace cst {

enum class ReconMethod { fbp_lambda, landweber, tv };

inline std::optional<ReconMethod> parse_recon_method(std::string_view s) {
    if (s == "fbp" || s == "fbp_lambda") return ReconMethod::fbp_lambda;
    if (s == "landweber") return ReconMethod::landweber;
    if (s == "tv") return ReconMethod::tv;
    return std::nullopt;
}

inline const char* to_string(ReconMethod m) {
    switch (m) {
    case ReconMethod::fbp_lambda: return "fbp";
    case ReconMethod::landweber: return "landweber";
    case ReconMethod::tv: return "tv";
    }
    return "?";
}

struct ReconConfig {
    ReconMethod method = ReconMethod::tv;
    int iterations = 300;
    double relaxation = 1.0; // Landweber step in units of 1/L, L ~ ||A||^2
    double tv_lambda = 2e-4;
    double tv_beta = 1.0;
    int derivative_order = 2;
    double tolerance = 0.0; // relative change that ends the iteration early; 0 runs every iteration
    bool tv_global_sqrt = false;
    int power_iterations = 20;

    static ReconConfig defaults(ReconMethod m) {
        ReconConfig c;
        c.method = m;
        c.iterations = m == ReconMethod::landweber ? 200 : 300;
        return c;
    }

    void validate() const {
        require(iterations >= 1, "iterations must be >= 1");
        require(relaxation > 0.0, "relaxation must be positive");
        require(tv_lambda >= 0.0, "tv_lambda must be non-negative");
        require(tv_beta > 0.0, "tv_beta must be positive");
        require(derivative_order == 1 || derivative_order == 2, "derivative order must be 1 or 2");
        require(tolerance >= 0.0, "tolerance must be non-negative");
        require(power_iterations >= 1, "power iterations must be >= 1");
    }
};

struct ReconResult {
    ImageGrid image;
    std::vector<double> trace; // residual norms (Landweber) or objective values (TV), starting at x0
    double lipschitz = 0.0;    // power-iteration estimate of ||A||^2
    int iterations_run = 0;
};

// ---------------------------------------------------------------------------
// Lambda tomography

/// k-th derivative in s of every column: central differences inside, one-sided
/// second-order stencils at the two boundary bins.
inline Sinogram derivative_s(const Sinogram& b, int k) {
    require(k == 1 || k == 2, "derivative order must be 1 or 2");
    const std::size_t ns = b.ns();
    require(ns >= 4, "derivative needs at least 4 offsets");
    const double h = b.geom().ds();
    Sinogram out(b.geom());
    for (std::size_t j = 0; j < b.ntheta(); ++j) {
        const auto g = b.column(j);
        auto d = out.column(j);
        if (k == 1) {
            const double c = 1.0 / (2.0 * h);
            for (std::size_t i = 1; i + 1 < ns; ++i) d[i] = c * (g[i + 1] - g[i - 1]);
            d[0] = c * (-3.0 * g[0] + 4.0 * g[1] - g[2]);
            d[ns - 1] = c * (3.0 * g[ns - 1] - 4.0 * g[ns - 2] + g[ns - 3]);
        } else {
            const double c = 1.0 / (h * h);
            for (std::size_t i = 1; i + 1 < ns; ++i) d[i] = c * (g[i + 1] - 2.0 * g[i] + g[i - 1]);
            d[0] = c * (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]);
            d[ns - 1] = c * (2.0 * g[ns - 1] - 5.0 * g[ns - 2] + 4.0 * g[ns - 3] - g[ns - 4]);
        }
    }
    return out;
}

/// f_r = R* d^k/ds^k b. No sign flip; edges show up in |f_r|.
inline ImageGrid fbp_lambda(const Sinogram& b, const GridShape& shape, int k = 2) {
    return radon_adjoint(derivative_s(b, k), shape);
}

// ---------------------------------------------------------------------------
// Shared linear-operator helpers (weighted inner products)

namespace detail {

inline double image_norm(const ImageGrid& x) { return std::sqrt(x.cell_area()) * norm2(x.values()); }

inline double sino_norm(const Sinogram& g) {
    return std::sqrt(g.geom().ds() * g.geom().dtheta()) * norm2(g.values());
}

inline Sinogram residual(const ImageGrid& x, const Sinogram& b, const WeightField& w) {
    Sinogram r = radon_forward(x, b.geom(), w);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= b[k];
    return r;
}

} // namespace detail

/// Power-iteration estimate of ||A||^2 = largest eigenvalue of A*A.
inline double operator_norm_sq(const ScanGeometry& geom, const GridShape& shape, int iterations = 20,
                               const WeightField& w = {}) {
    ImageGrid x(shape, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double n = detail::image_norm(x);
        if (n == 0.0) return 0.0;
        for (double& v : x.values()) v /= n;
        ImageGrid y = radon_adjoint(radon_forward(x, geom, w), shape, w);
        lambda = x.cell_area() * inner(x.values(), y.values());
        x = std::move(y);
    }
    return lambda;
}

// ---------------------------------------------------------------------------
// Landweber

/// x_{k+1} = x_k + omega A*(b - A x_k), x_0 = 0, omega = relaxation / L.
/// Throws ErrorCode::divergence once the residual exceeds ten times its minimum.
inline ReconResult landweber(const Sinogram& b, const GridShape& shape, const ReconConfig& cfg,
                             const WeightField& w = {}) {
    cfg.validate();
    ReconResult res{ImageGrid(shape), {}, 0.0, 0};
    res.lipschitz = operator_norm_sq(b.geom(), shape, cfg.power_iterations, w);
    const double omega = res.lipschitz > 0.0 ? cfg.relaxation / res.lipschitz : 0.0;
    double rnorm = detail::sino_norm(b);
    double rmin = rnorm;
    res.trace.push_back(rnorm);
    if (rnorm == 0.0) return res;
    Sinogram r = b; // b - A x_0
    for (int it = 0; it < cfg.iterations; ++it) {
        const ImageGrid step = radon_adjoint(r, shape, w);
        for (std::size_t k = 0; k < step.size(); ++k) res.image[k] += omega * step[k];
        r = detail::residual(res.image, b, w);
        for (double& v : r.values()) v = -v;
        const double next = detail::sino_norm(r);
        if (!std::isfinite(next)) throw Error(ErrorCode::non_finite, "landweber: non-finite residual");
        res.trace.push_back(next);
        ++res.iterations_run;
        rmin = std::min(rmin, next);
        if (next > 10.0 * rmin)
            throw Error(ErrorCode::divergence, "landweber diverged at iteration " + std::to_string(it + 1) +
                                                   ": residual " + std::to_string(next) + " vs minimum " +
                                                   std::to_string(rmin) + "; reduce the relaxation");
        if (cfg.tolerance > 0.0 && std::abs(rnorm - next) <= cfg.tolerance * rnorm) break;
        rnorm = next;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Smoothed total variation

/// Value of the TV term with physical forward differences and a Neumann
/// boundary. Per-pixel: dxdy * sum sqrt(|grad x_i|^2 + beta^2).
/// Global: sqrt(dxdy * sum |grad x_i|^2 + beta^2).
inline double tv_value(const ImageGrid& x, double beta, bool global_sqrt = false) {
    const std::size_t nx = x.nx(), ny = x.ny();
    const double idx = 1.0 / x.dx(), idy = 1.0 / x.dy();
    double acc = 0.0;
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double gx = i + 1 < nx ? (x(i + 1, j) - x(i, j)) * idx : 0.0;
            const double gy = j + 1 < ny ? (x(i, j + 1) - x(i, j)) * idy : 0.0;
            const double g2 = gx * gx + gy * gy;
            acc += global_sqrt ? g2 : std::sqrt(g2 + beta * beta);
        }
    }
    if (global_sqrt) return std::sqrt(x.cell_area() * acc + beta * beta);
    return x.cell_area() * acc;
}

/// Gradient of tv_value with respect to the pixel values.
inline ImageGrid tv_gradient(const ImageGrid& x, double beta, bool global_sqrt = false) {
    const std::size_t nx = x.nx(), ny = x.ny();
    const double idx = 1.0 / x.dx(), idy = 1.0 / x.dy();
    const double area = x.cell_area();
    double scale = area;
    if (global_sqrt) scale = area / tv_value(x, beta, true);
    ImageGrid g = x.zeros_like();
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double gx = i + 1 < nx ? (x(i + 1, j) - x(i, j)) * idx : 0.0;
            const double gy = j + 1 < ny ? (x(i, j + 1) - x(i, j)) * idy : 0.0;
            const double rho = global_sqrt ? 1.0 : std::sqrt(gx * gx + gy * gy + beta * beta);
            const double px = scale * gx / rho * idx, py = scale * gy / rho * idy;
            if (i + 1 < nx) {
                g(i + 1, j) += px;
                g(i, j) -= px;
            }
            if (j + 1 < ny) {
                g(i, j + 1) += py;
                g(i, j) -= py;
            }
        }
    }
    return g;
}

/// ||A x - b||^2 + lambda TV(x), norms weighted by ds dtheta.
inline double tv_objective(const ImageGrid& x, const Sinogram& b, const ReconConfig& cfg, const WeightField& w = {}) {
    const Sinogram r = detail::residual(x, b, w);
    const double n = detail::sino_norm(r);
    return n * n + cfg.tv_lambda * tv_value(x, cfg.tv_beta, cfg.tv_global_sqrt);
}

/// Gradient descent on tv_objective. Barzilai-Borwein trial steps with Armijo
/// backtracking; only steps that decrease the objective are accepted.
inline ReconResult tv_reconstruct(const Sinogram& b, const GridShape& shape, const ReconConfig& cfg,
                                  const WeightField& w = {}) {
    cfg.validate();
    const double wsino = b.geom().ds() * b.geom().dtheta();
    ReconResult res{ImageGrid(shape), {}, 0.0, 0};
    res.lipschitz = operator_norm_sq(b.geom(), shape, cfg.power_iterations, w);

    struct Eval {
        double J;
        Sinogram r;
    };
    auto evaluate = [&](const ImageGrid& x) {
        Sinogram r = detail::residual(x, b, w);
        const double J = wsino * inner(r.values(), r.values()) +
                         cfg.tv_lambda * tv_value(x, cfg.tv_beta, cfg.tv_global_sqrt);
        if (!std::isfinite(J)) throw Error(ErrorCode::non_finite, "tv: non-finite objective");
        return Eval{J, std::move(r)};
    };
    // Gradient with respect to the dxdy-weighted image inner product, so a
    // step of 1/(2L) is safe for the data term.
    auto gradient = [&](const ImageGrid& x, const Sinogram& r) {
        ImageGrid g = radon_adjoint(r, shape, w);
        for (double& v : g.values()) v *= 2.0;
        if (cfg.tv_lambda > 0.0) {
            const ImageGrid t = tv_gradient(x, cfg.tv_beta, cfg.tv_global_sqrt);
            for (std::size_t k = 0; k < t.size(); ++k) g[k] += cfg.tv_lambda * t[k] / x.cell_area();
        }
        return g;
    };

    Eval cur = evaluate(res.image);
    ImageGrid grad = gradient(res.image, cur.r);
    res.trace.push_back(cur.J);
    double step = res.lipschitz > 0.0 ? 0.5 / res.lipschitz : 1.0;
    const double area = res.image.cell_area();
    for (int it = 0; it < cfg.iterations; ++it) {
        const double g2 = area * inner(grad.values(), grad.values());
        if (g2 == 0.0) break;
        ImageGrid trial(shape);
        std::optional<Eval> next;
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = res.image[k] - step * grad[k];
            Eval e = evaluate(trial);
            if (e.J <= cur.J - 1e-4 * step * g2) {
                next = std::move(e);
                break;
            }
            step *= 0.5;
        }
        if (!next) break;
        ImageGrid gnew = gradient(trial, next->r);
        // Barzilai-Borwein step for the next trial
        double sy = 0.0, ss = 0.0;
        for (std::size_t k = 0; k < trial.size(); ++k) {
            const double sk = trial[k] - res.image[k];
            sy += sk * (gnew[k] - grad[k]);
            ss += sk * sk;
        }
        const double prev = cur.J;
        res.image = std::move(trial);
        grad = std::move(gnew);
        cur = std::move(*next);
        res.trace.push_back(cur.J);
        ++res.iterations_run;
        if (sy > 0.0) step = ss / sy;
        if (cfg.tolerance > 0.0 && prev - cur.J <= cfg.tolerance * std::abs(prev)) break;
    }
    return res;
}

inline ReconResult reconstruct(const Sinogram& b, const GridShape& shape, const ReconConfig& cfg,
                               const WeightField& w = {}) {
    switch (cfg.method) {
    case ReconMethod::fbp_lambda: {
        cfg.validate();
        return {fbp_lambda(b, shape, cfg.derivative_order), {}, 0.0, 1};
    }
    case ReconMethod::landweber: return landweber(b, shape, cfg, w);
    case ReconMethod::tv: return tv_reconstruct(b, shape, cfg, w);
    }
    throw Error(ErrorCode::invalid_argument, "unknown reconstruction method");
}

} // namespace cst
