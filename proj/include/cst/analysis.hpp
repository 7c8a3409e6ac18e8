#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <vector>

#include "cst/error.hpp"
#include "cst/fft.hpp"
#include "cst/grid.hpp"
#include "cst/parallel.hpp"
#include "cst/raytransforms.hpp"
#include "cst/recon.hpp"

namespace cst {

// ---------------------------------------------------------------------------
// Sobolev partial norms

/// Fraction of the Nyquist radius bounding the frequency band used by fits.
struct FitBand {
    double lo = 0.125;
    double hi = 0.5;
    int shells_per_octave = 4;
};

struct SpectralReport {
    double alpha = 0.0;
    std::vector<double> cutoffs;       // dyadic radii in rad / unit length; the last one covers every frequency
    std::vector<double> partial_norms; // sum of (1 + |xi|^2)^alpha |f^(xi)|^2 dxi / (2 pi)^2 over |xi| <= cutoff
    double nyquist = 0.0;
    double tail_fraction = 0.0;        // share of the weighted energy above Nyquist / 2
    std::vector<double> shell_radii;   // geometric shell centres inside the fit band
    std::vector<double> shell_energy;  // unweighted shell energies
    double fitted_order = std::numeric_limits<double>::infinity();
    double fit_residual = 0.0;         // rms residual of the log-log fit at fitted_order
};

namespace detail {

struct Spectrum {
    std::vector<double> radius; // |xi| per bin
    std::vector<double> power;  // |f^|^2 dxi / (2 pi)^2 per bin
    double nyquist = 0.0;
};

inline Spectrum power_spectrum(const ImageGrid& img) {
    for (double v : img.values()) require(std::isfinite(v), "spectral analysis needs finite values");
    const std::size_t nx = img.nx(), ny = img.ny();
    const auto F = dft2(to_complex(img.data()), nx, ny);
    const double lx = img.bounds().xmax - img.bounds().xmin, ly = img.bounds().ymax - img.bounds().ymin;
    const double scale = img.cell_area() / static_cast<double>(nx * ny);
    Spectrum s;
    s.radius.resize(nx * ny);
    s.power.resize(nx * ny);
    s.nyquist = std::min(std::numbers::pi / img.dx(), std::numbers::pi / img.dy());
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            const double kx = 2.0 * std::numbers::pi * static_cast<double>(fft_index(i, nx)) / lx;
            const double ky = 2.0 * std::numbers::pi * static_cast<double>(fft_index(j, ny)) / ly;
            s.radius[j * nx + i] = std::hypot(kx, ky);
            s.power[j * nx + i] = std::norm(F[j * nx + i]) * scale;
        }
    return s;
}

/// Least-squares slope and rms residual of y against x.
inline std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = y[k] - my - slope * (x[k] - mx);
        rss += e * e;
    }
    return {slope, std::sqrt(rss / n)};
}

/// Sobolev order of a spectrum: the weight exponent at which the log-log slope
/// of shell energies inside the fit band crosses zero. +inf for an empty band.
inline std::pair<double, double> fit_order(const Spectrum& s, const FitBand& band, std::vector<double>* radii = nullptr,
                                           std::vector<double>* energy = nullptr) {
    const int nshell = static_cast<int>(std::round(std::log2(band.hi / band.lo) * band.shells_per_octave));
    std::vector<double> edges(nshell + 1);
    for (int k = 0; k <= nshell; ++k)
        edges[k] = s.nyquist * band.lo * std::pow(band.hi / band.lo, static_cast<double>(k) / nshell);
    // bins grouped by shell once; the weighted sums are re-evaluated for each alpha
    std::vector<std::vector<std::size_t>> members(nshell);
    for (std::size_t p = 0; p < s.radius.size(); ++p) {
        const double r = s.radius[p];
        if (r <= edges.front() || r > edges.back()) continue;
        const auto it = std::upper_bound(edges.begin(), edges.end(), r);
        const auto k = static_cast<std::size_t>(std::max<long>(0, (it - edges.begin()) - 1));
        members[std::min<std::size_t>(k, nshell - 1)].push_back(p);
    }
    std::vector<double> logr, e0;
    std::vector<std::vector<std::size_t>> used;
    for (int k = 0; k < nshell; ++k) {
        double e = 0.0;
        for (std::size_t p : members[k]) e += s.power[p];
        if (e <= 0.0 || members[k].empty()) continue;
        logr.push_back(0.5 * (std::log(edges[k]) + std::log(edges[k + 1])));
        e0.push_back(e);
        used.push_back(members[k]);
    }
    if (radii) {
        radii->clear();
        for (double l : logr) radii->push_back(std::exp(l));
    }
    if (energy) *energy = e0;
    if (logr.size() < 3) return {std::numeric_limits<double>::infinity(), 0.0};

    auto slope = [&](double alpha) {
        std::vector<double> loge(used.size());
        for (std::size_t k = 0; k < used.size(); ++k) {
            double e = 0.0;
            for (std::size_t p : used[k]) e += std::pow(1.0 + s.radius[p] * s.radius[p], alpha) * s.power[p];
            loge[k] = std::log(e);
        }
        return linear_fit(logr, loge);
    };
    double lo = -4.0, hi = 8.0;
    if (slope(hi).first < 0.0) return {std::numeric_limits<double>::infinity(), slope(hi).second};
    if (slope(lo).first > 0.0) return {lo, slope(lo).second};
    while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid).first < 0.0 ? lo : hi) = mid;
    }
    const double alpha = 0.5 * (lo + hi);
    return {alpha, slope(alpha).second};
}

} // namespace detail

/// Weighted Fourier energies of img over dyadic discs |xi| <= Nyquist 2^-m,
/// plus a fitted Sobolev order (see detail::fit_order).
inline SpectralReport sobolev_partial_norms(const ImageGrid& img, double alpha, const FitBand& band = {}) {
    require(std::isfinite(alpha), "alpha must be finite");
    require(band.lo > 0.0 && band.hi > band.lo && band.shells_per_octave >= 1, "invalid fit band");
    for (double v : img.values())
        if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "image contains non-finite values");
    const auto s = detail::power_spectrum(img);
    SpectralReport r;
    r.alpha = alpha;
    r.nyquist = s.nyquist;
    const double rmin = 2.0 * std::numbers::pi /
                        std::max(img.bounds().xmax - img.bounds().xmin, img.bounds().ymax - img.bounds().ymin);
    for (double c = s.nyquist; c >= rmin; c *= 0.5) r.cutoffs.insert(r.cutoffs.begin(), c);
    r.cutoffs.push_back(*std::max_element(s.radius.begin(), s.radius.end()));

    std::vector<double> weighted(s.power.size());
    double total = 0.0, above_half = 0.0;
    for (std::size_t p = 0; p < s.power.size(); ++p) {
        weighted[p] = std::pow(1.0 + s.radius[p] * s.radius[p], alpha) * s.power[p];
        total += weighted[p];
        if (s.radius[p] > 0.5 * s.nyquist) above_half += weighted[p];
    }
    for (std::size_t k = 0; k < r.cutoffs.size(); ++k) {
        double acc = 0.0;
        if (k + 1 == r.cutoffs.size()) {
            acc = total;
        } else {
            for (std::size_t p = 0; p < s.power.size(); ++p)
                if (s.radius[p] <= r.cutoffs[k]) acc += weighted[p];
        }
        r.partial_norms.push_back(acc);
    }
    r.tail_fraction = total > 0.0 ? above_half / total : 0.0;
    if (total > 0.0) std::tie(r.fitted_order, r.fit_residual) = detail::fit_order(s, band, &r.shell_radii, &r.shell_energy);
    return r;
}

// ---------------------------------------------------------------------------
// Smoothing by the truncated V-line transform

struct SmoothingReport {
    double order_f = std::numeric_limits<double>::infinity();
    double order_vf = std::numeric_limits<double>::infinity();
    double gain() const { return order_vf - order_f; }
    SpectralReport f_report, vf_report;
};

/// Grid with the same pitch as f, enlarged by `margin` on every side, holding f.
inline ImageGrid pad_image(const ImageGrid& f, double margin) {
    const auto mx = static_cast<std::size_t>(std::ceil(margin / f.dx()));
    const auto my = static_cast<std::size_t>(std::ceil(margin / f.dy()));
    const Bounds& b = f.bounds();
    const Bounds big{b.xmin - static_cast<double>(mx) * f.dx(), b.xmax + static_cast<double>(mx) * f.dx(),
                     b.ymin - static_cast<double>(my) * f.dy(), b.ymax + static_cast<double>(my) * f.dy()};
    ImageGrid g(f.nx() + 2 * mx, f.ny() + 2 * my, big);
    for (std::size_t j = 0; j < f.ny(); ++j)
        for (std::size_t i = 0; i < f.nx(); ++i) g(i + mx, j + my) = f(i, j);
    return g;
}

/// Fitted Sobolev orders of f and of its pointwise V-line field at angle phi.
/// The field is evaluated on a grid padded by nu + 1 pixel so that it is
/// compactly supported inside the analysis window.
inline SmoothingReport vline_smoothing_report(const ImageGrid& f, double phi, const VLineParams& p,
                                              const FitBand& band = {}) {
    p.validate();
    require(p.kernel.kind == KernelSpec::Kind::delta, "smoothing report needs the delta kernel");
    const ImageGrid padded = pad_image(f, p.nu + std::max(f.dx(), f.dy()));
    const RayIntegrator ri(padded);
    const ImageGrid field =
        detail::smoothed_vline_masked(ri, phi, p, discretize(p.kernel, padded.dx(), padded.dy()), {});
    SmoothingReport r;
    r.f_report = sobolev_partial_norms(padded, 0.0, band);
    r.vf_report = sobolev_partial_norms(field, 0.0, band);
    r.order_f = r.f_report.fitted_order;
    r.order_vf = r.vf_report.fitted_order;
    return r;
}

// ---------------------------------------------------------------------------
// Fourier series of the V-line transform in phi

namespace detail {

/// Relative L2 difference of two fields restricted to the band
/// lo * Nyquist <= |xi| <= hi * Nyquist of their 2-D spectra.
inline double band_relative_error(const std::vector<cplx>& measured, const std::vector<cplx>& predicted,
                                  const GridShape& shape, const FitBand& band) {
    const ImageGrid g(shape);
    const auto A = dft2(measured, shape.nx, shape.ny), B = dft2(predicted, shape.nx, shape.ny);
    const auto s = power_spectrum(g);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < A.size(); ++p) {
        if (s.radius[p] < band.lo * s.nyquist || s.radius[p] > band.hi * s.nyquist) continue;
        num += std::norm(A[p] - B[p]);
        den += std::norm(B[p]);
    }
    return den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
}

/// G(z) = int_0^z J_k(u) du, tabulated and linearly interpolated.
class BesselIntegral {
public:
    BesselIntegral(int k, double zmax, double step = 0.02) : step_(step) {
        const auto n = static_cast<std::size_t>(std::ceil(zmax / step)) + 2;
        table_.assign(n, 0.0);
        auto J = [k](double u) { return std::cyl_bessel_j(static_cast<double>(k), u); };
        double prev = J(0.0);
        for (std::size_t m = 1; m < n; ++m) {
            const double u0 = step * static_cast<double>(m - 1), u1 = u0 + step;
            const double mid = J(0.5 * (u0 + u1)), next = J(u1);
            table_[m] = table_[m - 1] + step / 6.0 * (prev + 4.0 * mid + next); // Simpson
            prev = next;
        }
    }
    double operator()(double z) const {
        const double u = z / step_;
        const auto m = static_cast<std::size_t>(u);
        if (m + 1 >= table_.size()) return table_.back();
        const double w = u - static_cast<double>(m);
        return (1.0 - w) * table_[m] + w * table_[m + 1];
    }

private:
    double step_;
    std::vector<double> table_;
};

inline double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

} // namespace detail

struct FourierCoefficient {
    int k = 0;
    std::vector<cplx> measured;  // (1 / 2 pi) int V(x, phi) exp(-i k phi) dphi at the pixel centres
    std::vector<cplx> predicted; // same quantity from the closed form, evaluated through f^
    double field_norm = 0.0;     // L2 norm of `measured` (dx dy weighted)
    double band_error = 0.0;     // relative L2 difference inside the fit band
};

struct VLineFourierReport {
    GridShape shape;
    std::size_t nphi = 0;
    std::vector<FourierCoefficient> coefficients; // k = 0 .. k_max
};

/// Measured k-th Fourier coefficient in phi of the V-line field of f, next to
/// the closed form
///   c_k^(xi) = (a e^{2 i k psi} + b) e^{-i k phi_xi} f^(xi) int_0^nu J_k(t |xi|) dt,
/// which tends to (a e^{2 i k psi} + b) e^{-i k phi_xi} f^(xi) / |xi| for long legs.
/// The closed form is evaluated for the bilinear interpolant of f (tent
/// transfer and first-order aliases) on a torus large enough to hold the field.
inline VLineFourierReport vline_fourier_coefficients(const ImageGrid& f, const VLineParams& p, int k_max,
                                                     std::size_t nphi = 256, const FitBand& band = {}) {
    p.validate();
    require(p.kernel.kind == KernelSpec::Kind::delta, "Fourier coefficients need the delta kernel");
    require(nphi >= 4, "nphi must be >= 4");
    require(k_max >= 0 && static_cast<std::size_t>(k_max) < nphi / 2, "k_max must be below nphi / 2");
    const std::size_t nx = f.nx(), ny = f.ny(), npix = nx * ny;
    const auto nk = static_cast<std::size_t>(k_max) + 1;

    // measured: V on the (pixel x phi) lattice, then a DFT over phi per pixel
    const RayIntegrator ri(f);
    std::vector<double> v(npix * nphi);
    parallel_for(nphi, [&](std::size_t m) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(nphi);
        const Point2 la = source_leg(phi, p.psi), lb = detector_leg(phi);
        for (std::size_t q = 0; q < npix; ++q) {
            const Point2 x = f.center(q % nx, q / nx);
            double val = 0.0;
            if (p.a != 0.0) val += p.a * ri.divergent_beam(x, la, p.nu);
            if (p.b != 0.0) val += p.b * ri.divergent_beam(x, lb, p.nu);
            v[q * nphi + m] = val;
        }
    });
    VLineFourierReport rep;
    rep.shape = f.shape();
    rep.nphi = nphi;
    rep.coefficients.resize(nk);
    for (std::size_t k = 0; k < nk; ++k) {
        rep.coefficients[k].k = static_cast<int>(k);
        rep.coefficients[k].measured.resize(npix);
    }
    parallel_for(npix, [&](std::size_t q) {
        std::vector<cplx> series(v.begin() + static_cast<long>(q * nphi), v.begin() + static_cast<long>((q + 1) * nphi));
        const auto c = dft(series);
        for (std::size_t k = 0; k < nk; ++k) rep.coefficients[k].measured[q] = c[k] / static_cast<double>(nphi);
    });

    // predicted: closed form on a torus padded by the leg length
    const ImageGrid torus = pad_image(f, p.nu + std::max(f.dx(), f.dy()));
    const std::size_t tx = torus.nx(), ty = torus.ny();
    const auto mx = (tx - nx) / 2, my = (ty - ny) / 2;
    const auto F = dft2(to_complex(torus.data()), tx, ty);
    const double lx = torus.bounds().xmax - torus.bounds().xmin, ly = torus.bounds().ymax - torus.bounds().ymin;
    const double hx = f.dx(), hy = f.dy();
    const double two_pi = 2.0 * std::numbers::pi;
    const double rmax = std::hypot(3.0 * std::numbers::pi / hx, 3.0 * std::numbers::pi / hy);
    for (std::size_t k = 0; k < nk; ++k) {
        const detail::BesselIntegral G(static_cast<int>(k), p.nu * rmax);
        const cplx weight_a = p.a * std::polar(1.0, 2.0 * static_cast<double>(k) * p.psi);
        std::vector<cplx> spec(tx * ty);
        for (std::size_t j = 0; j < ty; ++j)
            for (std::size_t i = 0; i < tx; ++i) {
                const double kx0 = two_pi * static_cast<double>(fft_index(i, tx)) / lx;
                const double ky0 = two_pi * static_cast<double>(fft_index(j, ty)) / ly;
                cplx acc = 0.0;
                for (int ax = -1; ax <= 1; ++ax)
                    for (int ay = -1; ay <= 1; ++ay) {
                        const double kx = kx0 + two_pi * ax / hx, ky = ky0 + two_pi * ay / hy;
                        const double rho = std::hypot(kx, ky);
                        const double tent = std::pow(detail::sinc(0.5 * kx * hx) * detail::sinc(0.5 * ky * hy), 2);
                        const double ik = rho > 0.0 ? G(p.nu * rho) / rho : (k == 0 ? p.nu : 0.0);
                        const cplx dir = std::polar(1.0, -static_cast<double>(k) * std::atan2(ky, kx));
                        acc += (weight_a + p.b) * dir * (tent * ik);
                    }
                spec[j * tx + i] = acc * F[j * tx + i];
            }
        const auto field = dft2(std::move(spec), tx, ty, true);
        auto& c = rep.coefficients[k];
        c.predicted.resize(npix);
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) c.predicted[j * nx + i] = field[(j + my) * tx + i + mx];
        double nrm = 0.0;
        for (const auto& z : c.measured) nrm += std::norm(z);
        c.field_norm = std::sqrt(nrm * f.cell_area());
        c.band_error = detail::band_relative_error(c.measured, c.predicted, f.shape(), band);
    }
    return rep;
}

/// (f * 1/|y|)(x) on the pixel centres of f; the singular cell uses its exact
/// cell average of 1/|y|.
inline ImageGrid inverse_distance_convolution(const ImageGrid& f) {
    const long nx = static_cast<long>(f.nx()), ny = static_cast<long>(f.ny());
    const double hx = f.dx(), hy = f.dy();
    // kernel on offsets (di, dj) in [-(n-1), n-1]
    const long kx = 2 * nx - 1;
    std::vector<double> ker(static_cast<std::size_t>(kx * (2 * ny - 1)));
    for (long dj = -(ny - 1); dj < ny; ++dj)
        for (long di = -(nx - 1); di < nx; ++di) {
            double val;
            if (di == 0 && dj == 0) {
                // int over [-hx/2, hx/2] x [-hy/2, hy/2] of 1/|y|, divided by the cell area
                const double a = 0.5 * hx, b = 0.5 * hy;
                val = 4.0 * (a * std::asinh(b / a) + b * std::asinh(a / b)) / (hx * hy);
            } else {
                val = 1.0 / std::hypot(static_cast<double>(di) * hx, static_cast<double>(dj) * hy);
            }
            ker[static_cast<std::size_t>((dj + ny - 1) * kx + di + nx - 1)] = val;
        }
    ImageGrid out = f.zeros_like();
    parallel_for(static_cast<std::size_t>(ny), [&](std::size_t jj) {
        const auto j = static_cast<long>(jj);
        for (long i = 0; i < nx; ++i) {
            double acc = 0.0;
            for (long q = 0; q < ny; ++q)
                for (long pidx = 0; pidx < nx; ++pidx) {
                    const double fv = f(static_cast<std::size_t>(pidx), static_cast<std::size_t>(q));
                    if (fv == 0.0) continue;
                    acc += fv * ker[static_cast<std::size_t>((j - q + ny - 1) * kx + i - pidx + nx - 1)];
                }
            out(static_cast<std::size_t>(i), jj) = acc * hx * hy;
        }
    });
    return out;
}

/// Band-limited relative error between the measured zeroth coefficient and
/// (a + b) / (2 pi) (f * 1/|y|). The 1 / (2 pi) comes from averaging over phi.
inline double k0_identity_error(const ImageGrid& f, const VLineFourierReport& rep, const VLineParams& p,
                                const FitBand& band = {}) {
    require(!rep.coefficients.empty() && rep.shape == f.shape(), "report does not match the image");
    const ImageGrid conv = inverse_distance_convolution(f);
    std::vector<cplx> predicted(conv.size());
    for (std::size_t q = 0; q < conv.size(); ++q) predicted[q] = (p.a + p.b) / (2.0 * std::numbers::pi) * conv[q];
    return detail::band_relative_error(rep.coefficients[0].measured, predicted, f.shape(), band);
}

// ---------------------------------------------------------------------------
// Local singularity order of sinogram columns

struct SingularityConfig {
    std::size_t window = 128;   // samples, power of two
    double threshold = 1.0;     // H^1 dividing line
    double dead_band = 0.15;    // orders below threshold + dead_band count as singular
    double max_residual = 0.5;  // rms log-log residual above which a fit is not trusted
    double amplitude_floor = 1e-3; // band amplitude relative to the sinogram-wide maximum
    double nms_fraction = 0.25; // flags must be the band-amplitude maximum within +- window * nms_fraction
    FitBand band{0.0625, 0.25}; // fit band as a fraction of the window Nyquist

    void validate() const {
        require(window >= 16 && (window & (window - 1)) == 0, "window must be a power of two >= 16");
        require(dead_band >= 0.0 && max_residual > 0.0 && amplitude_floor >= 0.0, "invalid singularity thresholds");
        require(nms_fraction >= 0.0, "nms fraction must be non-negative");
        require(band.lo > 0.0 && band.hi > band.lo && band.hi <= 1.0, "invalid fit band");
    }
};

/// Per-bin local order estimates. order is +inf where the windowed band is
/// empty and NaN where the window leaves the column.
struct SingularityOrderMap {
    ScanGeometry geom;
    std::size_t window = 0;
    std::vector<double> order;
    std::vector<double> residual;
    std::vector<double> confidence; // band amplitude relative to the sinogram-wide maximum
    std::vector<std::uint8_t> valid;
    std::vector<std::uint8_t> flagged;

    std::size_t index(std::size_t i, std::size_t j) const { return j * geom.ns + i; }
    std::size_t flagged_count() const {
        return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
    }
};

namespace detail {

struct LocalOrder {
    double order, residual, amplitude;
};

/// Hann-windowed, detrended segment of `col` centred at c; decay exponent p of
/// |DFT| over the band, reported as the 1-D Sobolev order p - 1/2.
inline LocalOrder local_order(const double* col, long c, std::size_t W, const FitBand& band) {
    const long half = static_cast<long>(W / 2);
    const double mid = 0.5 * static_cast<double>(W - 1);
    double my = 0.0;
    for (std::size_t n = 0; n < W; ++n) my += col[c - half + static_cast<long>(n)];
    my /= static_cast<double>(W);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t n = 0; n < W; ++n) {
        const double d = static_cast<double>(n) - mid;
        sxx += d * d;
        sxy += d * (col[c - half + static_cast<long>(n)] - my);
    }
    const double slope = sxy / sxx;
    std::vector<cplx> z(W);
    for (std::size_t n = 0; n < W; ++n) {
        const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(W)));
        const double d = static_cast<double>(n) - mid;
        z[n] = hann * (col[c - half + static_cast<long>(n)] - my - slope * d);
    }
    const auto X = dft(z);
    const double nyq = 0.5 * static_cast<double>(W);
    const auto m0 = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(band.lo * nyq)));
    const auto m1 = static_cast<std::size_t>(std::round(band.hi * nyq));
    std::vector<double> lx, ly;
    double amp = 0.0, peak = 0.0;
    for (std::size_t m = m0; m <= m1; ++m) {
        const double a = std::abs(X[m]);
        amp += a * a;
        peak = std::max(peak, a);
    }
    amp = std::sqrt(amp / static_cast<double>(m1 - m0 + 1));
    // bins at rounding level carry no decay information
    double scale = 0.0;
    for (std::size_t n = 0; n < W; ++n) scale = std::max(scale, std::abs(col[c - half + static_cast<long>(n)]));
    if (peak <= 1e-12 * std::max(scale, 1e-300) || peak == 0.0) return {std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (std::size_t m = m0; m <= m1; ++m) {
        lx.push_back(std::log(static_cast<double>(m)));
        ly.push_back(std::log(std::max(std::abs(X[m]), 1e-300)));
    }
    const auto [s, res] = linear_fit(lx, ly);
    return {-s - 0.5, res, amp};
}

} // namespace detail

/// Windowed spectral-decay estimate of the local Sobolev order along s for
/// every bin, with singular bins flagged (order below threshold + dead band,
/// trusted fit, enough band amplitude, and locally strongest).
inline SingularityOrderMap singularity_order_map(const Sinogram& b, const SingularityConfig& cfg = {}) {
    cfg.validate();
    const ScanGeometry& g = b.geom();
    const std::size_t ns = g.ns, nt = g.ntheta, W = cfg.window;
    SingularityOrderMap out;
    out.geom = g;
    out.window = W;
    out.order.assign(ns * nt, std::numeric_limits<double>::quiet_NaN());
    out.residual.assign(ns * nt, 0.0);
    out.confidence.assign(ns * nt, 0.0);
    out.valid.assign(ns * nt, 0);
    out.flagged.assign(ns * nt, 0);
    if (ns < W) return out;
    const long half = static_cast<long>(W / 2);
    std::vector<double> amp(ns * nt, 0.0);
    parallel_for(nt, [&](std::size_t j) {
        const double* col = b.values().data() + j * ns;
        for (long i = half; i + half <= static_cast<long>(ns); ++i) {
            const auto e = detail::local_order(col, i, W, cfg.band);
            const std::size_t q = j * ns + static_cast<std::size_t>(i);
            out.valid[q] = 1;
            out.order[q] = e.order;
            out.residual[q] = e.residual;
            amp[q] = e.amplitude;
        }
    });
    const double amax = *std::max_element(amp.begin(), amp.end());
    if (amax <= 0.0) return out;
    for (std::size_t q = 0; q < amp.size(); ++q) out.confidence[q] = amp[q] / amax;
    const auto reach = static_cast<long>(std::round(cfg.nms_fraction * static_cast<double>(W)));
    for (std::size_t j = 0; j < nt; ++j)
        for (long i = 0; i < static_cast<long>(ns); ++i) {
            const std::size_t q = j * ns + static_cast<std::size_t>(i);
            if (!out.valid[q] || !(out.order[q] < cfg.threshold + cfg.dead_band)) continue;
            if (out.residual[q] > cfg.max_residual || out.confidence[q] < cfg.amplitude_floor) continue;
            bool strongest = true;
            for (long d = -reach; d <= reach && strongest; ++d) {
                const long k = i + d;
                if (d == 0 || k < 0 || k >= static_cast<long>(ns)) continue;
                const double other = amp[j * ns + static_cast<std::size_t>(k)];
                strongest = other < amp[q] || (other == amp[q] && d > 0);
            }
            out.flagged[q] = strongest;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Edge visibility along tangency curves

struct CurveBin {
    std::size_t i = 0; // s index
    std::size_t j = 0; // theta index
};

/// Bins nearest to the lines tangent to the ellipse (x - c)^2 / sx^2 + ... = 1
/// (axis-aligned), i.e. s = c . Theta +- sqrt(sx^2 cos^2 theta + sy^2 sin^2 theta).
/// Tangencies outside the s range are skipped.
inline std::vector<CurveBin> ellipse_tangency_curve(const ScanGeometry& g, double semi_x, double semi_y,
                                                    Point2 center = {}) {
    require(semi_x > 0.0 && semi_y > 0.0, "ellipse semi-axes must be positive");
    std::vector<CurveBin> out;
    for (std::size_t j = 0; j < g.ntheta; ++j) {
        const double th = g.theta(j), c = std::cos(th), sn = std::sin(th);
        const double h = std::sqrt(semi_x * semi_x * c * c + semi_y * semi_y * sn * sn);
        const double s0 = center.x * c + center.y * sn;
        for (double s : {s0 - h, s0 + h}) {
            const double u = (s - g.smin) / g.ds();
            if (u < -0.5 || u > static_cast<double>(g.ns) - 0.5) continue;
            out.push_back({static_cast<std::size_t>(std::clamp<long>(std::lround(u), 0, static_cast<long>(g.ns) - 1)), j});
        }
    }
    return out;
}

struct EdgeRatio {
    double ratio_nl = 0.0;
    double ratio_lin = 0.0;
};

namespace detail {

/// Median over the curve of max |d^2 b / ds^2| within one bin of each curve point.
inline double curve_strength(const Sinogram& d2, const std::vector<CurveBin>& curve) {
    const std::size_t ns = d2.geom().ns;
    std::vector<double> v;
    v.reserve(curve.size());
    for (const auto& c : curve) {
        require(c.i < ns && c.j < d2.geom().ntheta, "curve bin outside the sinogram");
        double m = 0.0;
        for (long d = -1; d <= 1; ++d) {
            const long i = static_cast<long>(c.i) + d;
            if (i < 0 || i >= static_cast<long>(ns)) continue;
            m = std::max(m, std::abs(d2.values()[c.j * ns + static_cast<std::size_t>(i)]));
        }
        v.push_back(m);
    }
    const auto mid = v.begin() + static_cast<long>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

inline double strength_ratio(const Sinogram& b, const std::vector<CurveBin>& inner, const std::vector<CurveBin>& outer) {
    const Sinogram d2 = derivative_s(b, 2);
    const double o = curve_strength(d2, outer);
    require(o > 0.0, "no edge signal along the outer curve");
    return curve_strength(d2, inner) / o;
}

} // namespace detail

/// Strength of the inner-boundary singularities relative to the outer ones,
/// measured by |d^2 b / ds^2| along the two tangency curves.
inline EdgeRatio edge_strength_ratio(const Sinogram& b_nonlinear, const Sinogram& b_linear,
                                     const std::vector<CurveBin>& inner, const std::vector<CurveBin>& outer) {
    require(!inner.empty() && !outer.empty(), "tangency curves must be non-empty");
    require(b_nonlinear.geom() == b_linear.geom(), "sinograms must share the scan geometry");
    return {detail::strength_ratio(b_nonlinear, inner, outer), detail::strength_ratio(b_linear, inner, outer)};
}

} // namespace cst
