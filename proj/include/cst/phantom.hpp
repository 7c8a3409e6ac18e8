#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cst/error.hpp"
#include "cst/grid.hpp"

namespace cst {

struct Disk {
    Point2 center;
    double radius = 0.5;
};

struct Ellipse {
    Point2 center;
    double semi_x = 0.5;
    double semi_y = 0.5;
    double angle = 0.0; // rotation of the x semi-axis, radians
};

struct Rectangle {
    Point2 center;
    double half_width = 0.5;
    double half_height = 0.5;
    double angle = 0.0;
};

struct Polygon {
    std::vector<Point2> vertices;
};

using ShapeGeometry = std::variant<Disk, Ellipse, Rectangle, Polygon>;

/// One signed primitive. Shapes are applied in order: positive shapes are
/// unioned into the support, negative shapes are cut out of it.
struct Shape {
    ShapeGeometry geometry;
    bool subtract = false;
};

enum class BlobProfile { gaussian, bump };

/// Smooth radial bump added on top of u * indicator. `gaussian` is
/// exp(-r^2 / 2 width^2) cut off at `cutoff`; `bump` is the C-infinity
/// exp(1 - 1/(1 - (r/width)^2)) supported on r < width.
struct Blob {
    Point2 center;
    double width = 0.15;
    double amplitude = 1.0;
    BlobProfile profile = BlobProfile::gaussian;
    double cutoff = 0.9;
};

/// Quadratic amplitude u(x, y) = c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2.
struct Amplitude {
    std::array<double, 6> coeffs{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};

    double operator()(Point2 p) const {
        const auto& c = coeffs;
        return c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.x + c[4] * p.x * p.y + c[5] * p.y * p.y;
    }
};

struct PhantomSpec {
    std::string name;
    std::vector<Shape> shapes;
    Amplitude amplitude;
    bool positive = true; // amplitude must stay > 0 on the support
    std::vector<Blob> blobs;
};

namespace detail {

inline Point2 to_local(Point2 p, Point2 center, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = p.x - center.x, dy = p.y - center.y;
    return {c * dx + s * dy, -s * dx + c * dy};
}

struct ContainsVisitor {
    Point2 p;
    bool operator()(const Disk& d) const {
        const double dx = p.x - d.center.x, dy = p.y - d.center.y;
        return dx * dx + dy * dy <= d.radius * d.radius;
    }
    bool operator()(const Ellipse& e) const {
        const Point2 q = to_local(p, e.center, e.angle);
        const double u = q.x / e.semi_x, v = q.y / e.semi_y;
        return u * u + v * v <= 1.0;
    }
    bool operator()(const Rectangle& r) const {
        const Point2 q = to_local(p, r.center, r.angle);
        return std::abs(q.x) <= r.half_width && std::abs(q.y) <= r.half_height;
    }
    bool operator()(const Polygon& poly) const {
        // even-odd crossing rule
        bool inside = false;
        const auto& v = poly.vertices;
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
            if ((v[i].y > p.y) != (v[j].y > p.y)) {
                const double xc = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
                if (p.x < xc) inside = !inside;
            }
        }
        return inside;
    }
};

struct ValidateVisitor {
    void operator()(const Disk& d) const { require(d.radius > 0.0, "disk radius must be positive"); }
    void operator()(const Ellipse& e) const {
        require(e.semi_x > 0.0 && e.semi_y > 0.0, "ellipse semi-axes must be positive");
    }
    void operator()(const Rectangle& r) const {
        require(r.half_width > 0.0 && r.half_height > 0.0, "rectangle extents must be positive");
    }
    void operator()(const Polygon& p) const { require(p.vertices.size() >= 3, "polygon needs >= 3 vertices"); }
};

inline double blob_value(const Blob& b, Point2 p) {
    const double r = std::hypot(p.x - b.center.x, p.y - b.center.y);
    if (b.profile == BlobProfile::gaussian) {
        if (r >= b.cutoff) return 0.0;
        return b.amplitude * std::exp(-0.5 * r * r / (b.width * b.width));
    }
    const double t = r / b.width;
    if (t >= 1.0) return 0.0;
    return b.amplitude * std::exp(1.0 - 1.0 / (1.0 - t * t));
}

} // namespace detail

inline bool contains(const Shape& s, Point2 p) { return std::visit(detail::ContainsVisitor{p}, s.geometry); }

inline void validate(const PhantomSpec& spec) {
    for (const auto& s : spec.shapes) std::visit(detail::ValidateVisitor{}, s.geometry);
    for (const auto& b : spec.blobs) {
        require(b.width > 0.0, "blob width must be positive");
        require(b.cutoff > 0.0, "blob cutoff must be positive");
    }
}

/// Indicator of the support set built from the signed shapes.
inline bool in_support(const PhantomSpec& spec, Point2 p) {
    bool in = false;
    for (const auto& s : spec.shapes) {
        if (s.subtract) {
            if (in && contains(s, p)) in = false;
        } else if (!in && contains(s, p)) {
            in = true;
        }
    }
    return in;
}

/// Point value u(p) * indicator(p) + blobs(p).
inline double evaluate(const PhantomSpec& spec, Point2 p) {
    double v = 0.0;
    if (in_support(spec, p)) {
        const double u = spec.amplitude(p);
        if (spec.positive) require(u > 0.0, "phantom amplitude must be positive on the support");
        v = u;
    }
    for (const auto& b : spec.blobs) v += detail::blob_value(b, p);
    return v;
}

struct RasterOptions {
    int supersample = 4; // k x k subsamples per cell; 1 gives the exact center indicator
};

inline ImageGrid rasterize(const PhantomSpec& spec, std::size_t nx, std::size_t ny, Bounds bounds = {},
                           RasterOptions opts = {}) {
    validate(spec);
    require(opts.supersample >= 1, "supersample must be >= 1");
    ImageGrid g(nx, ny, bounds);
    const int k = opts.supersample;
    const double dx = g.dx(), dy = g.dy();
    const double inv = 1.0 / (k * k);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            if (k == 1) {
                g(i, j) = evaluate(spec, g.center(i, j));
                continue;
            }
            double acc = 0.0;
            for (int b = 0; b < k; ++b) {
                const double y = bounds.ymin + (static_cast<double>(j) + (b + 0.5) / k) * dy;
                for (int a = 0; a < k; ++a) {
                    const double x = bounds.xmin + (static_cast<double>(i) + (a + 0.5) / k) * dx;
                    acc += evaluate(spec, {x, y});
                }
            }
            g(i, j) = acc * inv;
        }
    }
    return g;
}

/// Binary version of the support set (cell centers), used as ground truth.
inline ImageGrid support_mask(const PhantomSpec& spec, std::size_t nx, std::size_t ny, Bounds bounds = {}) {
    validate(spec);
    ImageGrid g(nx, ny, bounds);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) g(i, j) = in_support(spec, g.center(i, j)) ? 1.0 : 0.0;
    return g;
}

enum class PhantomName { non_convex, elliptic_annulus, square, disk, gaussian };

inline std::optional<PhantomName> parse_phantom_name(std::string_view s) {
    if (s == "non_convex") return PhantomName::non_convex;
    if (s == "elliptic_annulus") return PhantomName::elliptic_annulus;
    if (s == "square") return PhantomName::square;
    if (s == "disk") return PhantomName::disk;
    if (s == "gaussian") return PhantomName::gaussian;
    return std::nullopt;
}

inline PhantomSpec disk_phantom(double radius, Point2 center = {}) {
    return {"disk", {{Disk{center, radius}, false}}, {}, true, {}};
}

inline PhantomSpec annulus_phantom(double outer_x, double outer_y, double inner_x, double inner_y) {
    PhantomSpec p;
    p.name = "elliptic_annulus";
    p.shapes = {{Ellipse{{}, outer_x, outer_y, 0.0}, false}, {Ellipse{{}, inner_x, inner_y, 0.0}, true}};
    return p;
}

inline PhantomSpec builtin_phantom(PhantomName name) {
    switch (name) {
    case PhantomName::non_convex: {
        // Kidney: an ellipse with a disk bitten out of its upper side. Simply
        // connected, concave along the bite, convex elsewhere.
        PhantomSpec p;
        p.name = "non_convex";
        p.shapes = {{Ellipse{{0.0, 0.0}, 0.5, 0.34, 0.0}, false},
                    {Disk{{0.0, 0.68}, 0.45}, true}};
        return p;
    }
    case PhantomName::elliptic_annulus: return annulus_phantom(0.9, 0.7, 0.4, 0.2); // walls 0.5 thick
    case PhantomName::square: {
        PhantomSpec p;
        p.name = "square";
        p.shapes = {{Rectangle{{}, 0.5, 0.5, 0.0}, false}};
        return p;
    }
    case PhantomName::disk: return disk_phantom(0.5);
    case PhantomName::gaussian: {
        PhantomSpec p;
        p.name = "gaussian";
        p.blobs = {Blob{{}, 0.15, 1.0, BlobProfile::gaussian, 0.9}};
        return p;
    }
    }
    throw Error(ErrorCode::invalid_argument, "unknown phantom");
}

inline PhantomSpec builtin_phantom(std::string_view name) {
    auto n = parse_phantom_name(name);
    if (!n) throw Error(ErrorCode::invalid_argument, "unknown phantom '" + std::string(name) + "'");
    return builtin_phantom(*n);
}

} // namespace cst
