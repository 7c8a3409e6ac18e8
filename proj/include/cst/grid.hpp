#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cst/error.hpp"

namespace cst {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline Point2 unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

struct Bounds {
    double xmin = -1.0;
    double xmax = 1.0;
    double ymin = -1.0;
    double ymax = 1.0;

    bool contains(Point2 p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
    bool operator==(const Bounds&) const = default;
};

struct GridShape {
    std::size_t nx = 200;
    std::size_t ny = 200;
    Bounds bounds{};
    bool operator==(const GridShape&) const = default;
};

/// Scalar field sampled at cell centers of a rectangular domain.
/// Storage is row-major with x varying fastest.
class ImageGrid {
public:
    ImageGrid() = default;

    ImageGrid(std::size_t nx, std::size_t ny, Bounds b = {}, double fill = 0.0)
        : nx_(nx), ny_(ny), bounds_(b), values_(nx * ny, fill) {
        validate();
    }

    explicit ImageGrid(const GridShape& s, double fill = 0.0) : ImageGrid(s.nx, s.ny, s.bounds, fill) {}

    ImageGrid(std::size_t nx, std::size_t ny, Bounds b, std::vector<double> values)
        : nx_(nx), ny_(ny), bounds_(b), values_(std::move(values)) {
        validate();
        require(values_.size() == nx_ * ny_, "ImageGrid: value count does not match nx*ny");
        for (double v : values_) require(std::isfinite(v), "ImageGrid: non-finite value");
    }

    /// Grid with the same shape and bounds, zero filled.
    ImageGrid zeros_like() const { return ImageGrid(nx_, ny_, bounds_, 0.0); }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t size() const { return values_.size(); }
    const Bounds& bounds() const { return bounds_; }
    GridShape shape() const { return {nx_, ny_, bounds_}; }

    double dx() const { return (bounds_.xmax - bounds_.xmin) / static_cast<double>(nx_); }
    double dy() const { return (bounds_.ymax - bounds_.ymin) / static_cast<double>(ny_); }
    double cell_area() const { return dx() * dy(); }
    double x(std::size_t i) const { return bounds_.xmin + (static_cast<double>(i) + 0.5) * dx(); }
    double y(std::size_t j) const { return bounds_.ymin + (static_cast<double>(j) + 0.5) * dy(); }
    Point2 center(std::size_t i, std::size_t j) const { return {x(i), y(j)}; }

    double& operator()(std::size_t i, std::size_t j) { return values_[j * nx_ + i]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[j * nx_ + i]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    bool same_shape(const ImageGrid& o) const { return nx_ == o.nx_ && ny_ == o.ny_ && bounds_ == o.bounds_; }

private:
    void validate() const {
        require(nx_ >= 2 && ny_ >= 2, "ImageGrid: nx and ny must be >= 2");
        require(bounds_.xmax > bounds_.xmin && bounds_.ymax > bounds_.ymin, "ImageGrid: empty bounds");
    }

    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    Bounds bounds_{};
    std::vector<double> values_;
};

/// Parallel-beam sampling of (s, theta). Offsets include both endpoints; angles
/// are periodic and exclude thetamax.
struct ScanGeometry {
    std::size_t ns = 282;
    std::size_t ntheta = 360;
    double smin = -std::numbers::sqrt2;
    double smax = std::numbers::sqrt2;
    double thetamin = 0.0;
    double thetamax = 2.0 * std::numbers::pi;

    void validate() const {
        require(ns >= 2 && ntheta >= 2, "ScanGeometry: ns and ntheta must be >= 2");
        require(smax > smin, "ScanGeometry: smax must exceed smin");
        require(thetamax > thetamin, "ScanGeometry: thetamax must exceed thetamin");
    }
    double ds() const { return (smax - smin) / static_cast<double>(ns - 1); }
    double dtheta() const { return (thetamax - thetamin) / static_cast<double>(ntheta); }
    double s(std::size_t i) const { return smin + static_cast<double>(i) * ds(); }
    double theta(std::size_t j) const { return thetamin + static_cast<double>(j) * dtheta(); }

    bool operator==(const ScanGeometry&) const = default;
};

/// Samples over (s, theta), s varying fastest.
class Sinogram {
public:
    Sinogram() = default;
    explicit Sinogram(ScanGeometry g, double fill = 0.0) : geom_(g) {
        geom_.validate();
        values_.assign(geom_.ns * geom_.ntheta, fill);
    }
    Sinogram(ScanGeometry g, std::vector<double> values) : geom_(g), values_(std::move(values)) {
        geom_.validate();
        require(values_.size() == geom_.ns * geom_.ntheta, "Sinogram: value count does not match ns*ntheta");
        for (double v : values_) require(std::isfinite(v), "Sinogram: non-finite value");
    }

    const ScanGeometry& geom() const { return geom_; }
    std::size_t ns() const { return geom_.ns; }
    std::size_t ntheta() const { return geom_.ntheta; }
    std::size_t size() const { return values_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return values_[j * geom_.ns + i]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[j * geom_.ns + i]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }

    std::span<double> column(std::size_t j) { return {values_.data() + j * geom_.ns, geom_.ns}; }
    std::span<const double> column(std::size_t j) const { return {values_.data() + j * geom_.ns, geom_.ns}; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

private:
    ScanGeometry geom_{};
    std::vector<double> values_;
};

namespace detail {

/// Lower-left lattice index and fractional offsets of a point in cell-center
/// index space. Indices may be -1 or n-1 next to the boundary, where the
/// missing neighbour is the zero extension of the grid.
struct BilinearStencil {
    long i0;
    long j0;
    double fu;
    double fv;
};

inline BilinearStencil bilinear_stencil(const Bounds& b, double inv_dx, double inv_dy, Point2 p) {
    const double u = (p.x - b.xmin) * inv_dx - 0.5;
    const double v = (p.y - b.ymin) * inv_dy - 0.5;
    const double fu0 = std::floor(u), fv0 = std::floor(v);
    return {static_cast<long>(fu0), static_cast<long>(fv0), u - fu0, v - fv0};
}

inline double bilinear_gather(const double* data, long nx, long ny, const BilinearStencil& s) {
    if (s.i0 >= 0 && s.j0 >= 0 && s.i0 + 1 < nx && s.j0 + 1 < ny) {
        const double* row0 = data + s.j0 * nx + s.i0;
        const double* row1 = row0 + nx;
        return (1.0 - s.fv) * ((1.0 - s.fu) * row0[0] + s.fu * row0[1]) +
               s.fv * ((1.0 - s.fu) * row1[0] + s.fu * row1[1]);
    }
    double acc = 0.0;
    for (int dj = 0; dj < 2; ++dj) {
        const long j = s.j0 + dj;
        if (j < 0 || j >= ny) continue;
        const double wy = dj ? s.fv : 1.0 - s.fv;
        for (int di = 0; di < 2; ++di) {
            const long i = s.i0 + di;
            if (i < 0 || i >= nx) continue;
            acc += wy * (di ? s.fu : 1.0 - s.fu) * data[j * nx + i];
        }
    }
    return acc;
}

/// Transpose of bilinear_gather: adds c times the interpolation weights.
inline void bilinear_scatter(double* data, long nx, long ny, const BilinearStencil& s, double c) {
    for (int dj = 0; dj < 2; ++dj) {
        const long j = s.j0 + dj;
        if (j < 0 || j >= ny) continue;
        const double wy = c * (dj ? s.fv : 1.0 - s.fv);
        for (int di = 0; di < 2; ++di) {
            const long i = s.i0 + di;
            if (i < 0 || i >= nx) continue;
            data[j * nx + i] += wy * (di ? s.fu : 1.0 - s.fu);
        }
    }
}

} // namespace detail

/// Bilinear interpolation between cell centers of the zero-extended grid: exact
/// on affine fields inside the hull of the cell centers, tapering to zero over
/// the outer half cell, and zero outside the domain.
inline double sample_bilinear(const ImageGrid& g, Point2 p) {
    const Bounds& b = g.bounds();
    if (!b.contains(p)) return 0.0;
    const auto s = detail::bilinear_stencil(b, 1.0 / g.dx(), 1.0 / g.dy(), p);
    return detail::bilinear_gather(g.data().data(), static_cast<long>(g.nx()), static_cast<long>(g.ny()), s);
}

// Elementwise helpers shared by the solvers.
inline double inner(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(inner(a, a)); }

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

} // namespace cst
