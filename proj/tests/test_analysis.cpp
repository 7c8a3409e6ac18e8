#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "cst/analysis.hpp"
#include "cst/phantom.hpp"
#include "cst/raytransforms.hpp"
#include "cst/recon.hpp"

using namespace cst;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double energy(const ImageGrid& f) {
    double e = 0.0;
    for (double v : f.values()) e += v * v;
    return e * f.cell_area();
}

// A few random gaussian blobs on a 64^2 grid.
ImageGrid random_blobs(std::mt19937_64& rng, std::size_t n = 64) {
    std::uniform_real_distribution<double> pos(-0.5, 0.5), width(0.05, 0.2), amp(-1.0, 2.0);
    PhantomSpec spec;
    spec.positive = false;
    spec.amplitude.coeffs = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    spec.shapes = {{Rectangle{{}, 1.9, 1.9, 0.0}, false}};
    for (int k = 0; k < 4; ++k) spec.blobs.push_back({{pos(rng), pos(rng)}, width(rng), amp(rng), BlobProfile::gaussian, 0.9});
    return rasterize(spec, n, n);
}

VLineParams delta_params(double a = 1.0, double b = 1.0, double psi = std::numbers::pi / 4.0, double nu = 4.0) {
    return {a, b, psi, nu, KernelSpec::delta()};
}

ScanGeometry column_geometry(std::size_t ntheta = 3) {
    ScanGeometry g;
    g.ntheta = ntheta;
    return g;
}

Sinogram from_profile(const ScanGeometry& g, auto&& profile) {
    Sinogram b(g);
    for (std::size_t j = 0; j < g.ntheta; ++j)
        for (std::size_t i = 0; i < g.ns; ++i) b(i, j) = profile(g.s(i));
    return b;
}

std::size_t nearest_bin(const ScanGeometry& g, double s) {
    return static_cast<std::size_t>(std::lround((s - g.smin) / g.ds()));
}

} // namespace

// ---------------------------------------------------------------------------

TEST(Sobolev, ParsevalAtAlphaZero) {
    const ImageGrid f = rasterize(builtin_phantom("disk"), 64, 64);
    const auto r = sobolev_partial_norms(f, 0.0);
    EXPECT_NEAR(r.partial_norms.back() / energy(f), 1.0, 1e-10);
}

TEST(Sobolev, DiskOrderIsOneHalf) {
    const auto r = sobolev_partial_norms(rasterize(builtin_phantom("disk"), 200, 200), 0.0);
    EXPECT_GE(r.fitted_order, 0.35);
    EXPECT_LE(r.fitted_order, 0.65);
}

TEST(Sobolev, GaussianTailIsSmallAtAlphaFour) {
    const auto r = sobolev_partial_norms(rasterize(builtin_phantom("gaussian"), 100, 100), 4.0);
    EXPECT_LT(r.tail_fraction, 0.01);
}

TEST(Sobolev, CutoffsAndPartialNormsAreMonotone) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> alpha(-1.0, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto r = sobolev_partial_norms(random_blobs(rng), alpha(rng));
        ASSERT_GE(r.cutoffs.size(), 2u);
        ASSERT_EQ(r.cutoffs.size(), r.partial_norms.size());
        for (std::size_t k = 1; k < r.cutoffs.size(); ++k) {
            EXPECT_GT(r.cutoffs[k], r.cutoffs[k - 1]);
            EXPECT_GE(r.partial_norms[k], r.partial_norms[k - 1]);
        }
        EXPECT_NEAR(r.cutoffs[r.cutoffs.size() - 2], r.nyquist, 1e-12 * r.nyquist);
    }
}

TEST(Sobolev, AmplitudeScaleCovariance) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int trial = 0; trial < 8; ++trial) {
        const ImageGrid f = random_blobs(rng);
        const double c = scale(rng);
        ImageGrid g = f;
        for (double& v : g.values()) v *= c;
        const auto rf = sobolev_partial_norms(f, 1.0), rg = sobolev_partial_norms(g, 1.0);
        for (std::size_t k = 0; k < rf.partial_norms.size(); ++k)
            EXPECT_NEAR(rg.partial_norms[k], c * c * rf.partial_norms[k], 1e-10 * c * c * rf.partial_norms[k]);
        if (std::isfinite(rf.fitted_order)) {
            EXPECT_NEAR(rg.fitted_order, rf.fitted_order, 1e-8);
        }
    }
}

TEST(Sobolev, ZeroImageGivesInfiniteOrder) {
    const auto r = sobolev_partial_norms(ImageGrid(32, 32), 0.0);
    EXPECT_EQ(r.fitted_order, inf);
    for (double p : r.partial_norms) EXPECT_EQ(p, 0.0);
}

TEST(Sobolev, RejectsNonFiniteInput) {
    ImageGrid f(16, 16);
    f(3, 4) = std::numeric_limits<double>::quiet_NaN();
    try {
        sobolev_partial_norms(f, 0.0);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::non_finite);
    }
    EXPECT_THROW(sobolev_partial_norms(ImageGrid(16, 16), inf), Error);
}

// ---------------------------------------------------------------------------

TEST(Smoothing, DiskGainsAboutOneHalf) {
    const auto r = vline_smoothing_report(rasterize(builtin_phantom("disk"), 200, 200), std::numbers::pi / 2.0,
                                          delta_params());
    EXPECT_GE(r.gain(), 0.3) << "order f " << r.order_f << ", order Vf " << r.order_vf;
}

TEST(Smoothing, SquareGainsNothing) {
    const auto r = vline_smoothing_report(rasterize(builtin_phantom("square"), 200, 200), std::numbers::pi / 2.0,
                                          delta_params());
    EXPECT_LE(r.gain(), 0.15) << "order f " << r.order_f << ", order Vf " << r.order_vf;
}

TEST(Smoothing, ZeroImageReportsInfinity) {
    const auto r = vline_smoothing_report(ImageGrid(32, 32), 0.3, delta_params(1.0, 1.0, std::numbers::pi / 4.0, 0.5));
    EXPECT_EQ(r.order_f, inf);
    EXPECT_EQ(r.order_vf, inf);
}

TEST(Smoothing, RequiresDeltaKernel) {
    VLineParams p = delta_params();
    p.kernel = KernelSpec::disk(0.05);
    EXPECT_THROW(vline_smoothing_report(ImageGrid(16, 16), 0.0, p), Error);
}

// ---------------------------------------------------------------------------

class FourierSeries : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        gaussian_ = new ImageGrid(rasterize(builtin_phantom("gaussian"), 64, 64));
        report_ = new VLineFourierReport(vline_fourier_coefficients(*gaussian_, params(), 3));
    }
    static void TearDownTestSuite() {
        delete gaussian_;
        delete report_;
    }
    static VLineParams params() { return delta_params(1.0, 0.6, std::numbers::pi / 4.0, 8.0); }

    static ImageGrid* gaussian_;
    static VLineFourierReport* report_;
};

ImageGrid* FourierSeries::gaussian_ = nullptr;
VLineFourierReport* FourierSeries::report_ = nullptr;

TEST_F(FourierSeries, MatchesClosedFormInBand) {
    ASSERT_EQ(report_->coefficients.size(), 4u);
    EXPECT_LT(report_->coefficients[0].band_error, 0.05);
    for (const auto& c : report_->coefficients) {
        EXPECT_LT(c.band_error, 0.05) << "k = " << c.k;
    }
}

TEST_F(FourierSeries, ZerothCoefficientIsInverseDistanceConvolution) {
    EXPECT_LT(k0_identity_error(*gaussian_, *report_, params()), 0.05);
}

TEST_F(FourierSeries, OddCoefficientsCancelForStraightLine) {
    const auto rep = vline_fourier_coefficients(*gaussian_, delta_params(1.0, 1.0, std::numbers::pi / 2.0, 8.0), 3);
    const double n0 = rep.coefficients[0].field_norm;
    ASSERT_GT(n0, 0.0);
    EXPECT_LT(rep.coefficients[1].field_norm, 0.02 * n0);
    EXPECT_LT(rep.coefficients[3].field_norm, 0.02 * n0);
    EXPECT_GT(rep.coefficients[2].field_norm, 0.02 * n0);
}

TEST(FourierLinearity, MeasuredFieldIsLinear) {
    std::mt19937_64 rng(3);
    const ImageGrid f1 = random_blobs(rng, 32), f2 = random_blobs(rng, 32);
    ImageGrid sum = f1;
    for (std::size_t q = 0; q < sum.size(); ++q) sum[q] += f2[q];
    const VLineParams p = delta_params(0.8, 1.3, 1.0, 2.0);
    const auto r1 = vline_fourier_coefficients(f1, p, 2, 64);
    const auto r2 = vline_fourier_coefficients(f2, p, 2, 64);
    const auto rs = vline_fourier_coefficients(sum, p, 2, 64);
    for (std::size_t k = 0; k < rs.coefficients.size(); ++k) {
        double err = 0.0, ref = 0.0;
        for (std::size_t q = 0; q < sum.size(); ++q) {
            const cplx expect = r1.coefficients[k].measured[q] + r2.coefficients[k].measured[q];
            err = std::max(err, std::abs(rs.coefficients[k].measured[q] - expect));
            ref = std::max(ref, std::abs(expect));
        }
        EXPECT_LE(err, 1e-8 * std::max(ref, 1.0)) << "k = " << k;
    }
}

TEST(FourierLinearity, RejectsBadArguments) {
    const ImageGrid f(16, 16);
    EXPECT_THROW(vline_fourier_coefficients(f, delta_params(), 8, 16), Error);
    EXPECT_THROW(vline_fourier_coefficients(f, delta_params(), -1, 16), Error);
    VLineParams p = delta_params();
    p.kernel = KernelSpec::gaussian(0.02);
    EXPECT_THROW(vline_fourier_coefficients(f, p, 1, 16), Error);
}

TEST(InverseDistance, PointMassGivesInverseDistance) {
    ImageGrid f(33, 33);
    f(16, 16) = 1.0 / f.cell_area();
    const ImageGrid g = inverse_distance_convolution(f);
    for (std::size_t i : {0u, 5u, 20u, 32u}) {
        const Point2 x = g.center(i, 16);
        if (i == 16) continue;
        EXPECT_NEAR(g(i, 16), 1.0 / norm(x), 1e-12 / norm(x));
    }
    // singular cell: average of 1/|y| over a square of side h is 4 asinh(1) / h
    EXPECT_NEAR(g(16, 16), 4.0 * std::asinh(1.0) / f.dx(), 1e-9 / f.dx());
}

// ---------------------------------------------------------------------------

TEST(SingularityMap, StepHasOrderOneHalf) {
    const ScanGeometry g = column_geometry();
    const double jump = 0.0031;
    const auto m = singularity_order_map(from_profile(g, [&](double s) { return s > jump ? 1.0 : 0.0; }));
    const std::size_t c = nearest_bin(g, jump);
    for (std::size_t j = 0; j < g.ntheta; ++j) {
        const double o = m.order[m.index(c, j)];
        EXPECT_GE(o, 0.3);
        EXPECT_LE(o, 0.7);
        bool found = false;
        for (long d = -2; d <= 2; ++d) found = found || m.flagged[m.index(static_cast<std::size_t>(static_cast<long>(c) + d), j)];
        EXPECT_TRUE(found) << "theta column " << j;
    }
    EXPECT_EQ(m.flagged_count(), g.ntheta);
}

TEST(SingularityMap, SmoothBumpIsHighOrderEverywhere) {
    const ScanGeometry g = column_geometry();
    const auto m = singularity_order_map(from_profile(g, [](double s) {
        const double t = s / 0.5;
        return std::abs(t) < 1.0 ? std::pow(1.0 - t * t, 3) : 0.0;
    }));
    std::size_t valid = 0;
    for (std::size_t q = 0; q < m.order.size(); ++q) {
        if (!m.valid[q]) continue;
        ++valid;
        EXPECT_GT(m.order[q], 1.5) << "bin " << q % g.ns;
    }
    EXPECT_GT(valid, 0u);
    EXPECT_EQ(m.flagged_count(), 0u);
}

TEST(SingularityMap, SinusoidHasNoFlags) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> freq(1.0, 12.0), phase(0.0, 6.28), amp(0.1, 5.0);
    for (int trial = 0; trial < 6; ++trial) {
        const double w = freq(rng), ph = phase(rng), a = amp(rng);
        const auto m = singularity_order_map(from_profile(column_geometry(2), [&](double s) { return a * std::sin(w * s + ph); }));
        EXPECT_EQ(m.flagged_count(), 0u) << "omega " << w;
    }
}

TEST(SingularityMap, ConstantOffsetDoesNotChangeOrders) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> pos(-0.8, 0.8), h(-2.0, 2.0), off(-50.0, 50.0);
    const ScanGeometry g = column_geometry(2);
    for (int trial = 0; trial < 5; ++trial) {
        const double s0 = pos(rng), height = h(rng), c = off(rng);
        auto profile = [&](double s) { return (s > s0 ? height : 0.0) + std::exp(-s * s) * std::cos(3.0 * s); };
        const auto m1 = singularity_order_map(from_profile(g, profile));
        const auto m2 = singularity_order_map(from_profile(g, [&](double s) { return profile(s) + c; }));
        for (std::size_t q = 0; q < m1.order.size(); ++q) {
            ASSERT_EQ(m1.valid[q], m2.valid[q]);
            if (!m1.valid[q]) continue;
            EXPECT_NEAR(m1.order[q], m2.order[q], 1e-6);
        }
        EXPECT_EQ(m1.flagged, m2.flagged);
    }
}

TEST(SingularityMap, WindowsLeavingTheColumnAreInvalid) {
    const ScanGeometry g = column_geometry(2);
    const auto m = singularity_order_map(from_profile(g, [](double s) { return s; }), {.window = 64});
    ASSERT_EQ(m.order.size(), g.ns * g.ntheta);
    EXPECT_FALSE(m.valid[m.index(0, 0)]);
    EXPECT_FALSE(m.valid[m.index(31, 1)]);
    EXPECT_TRUE(std::isnan(m.order[m.index(g.ns - 1, 0)]));
    EXPECT_TRUE(m.valid[m.index(g.ns / 2, 1)]);
}

TEST(SingularityMap, RejectsBadWindow) {
    const Sinogram b(column_geometry(2));
    EXPECT_THROW(singularity_order_map(b, {.window = 8}), Error);
    EXPECT_THROW(singularity_order_map(b, {.window = 100}), Error);
}

TEST(SingularityMap, LinearDiskSinogramFlagsTangencies) {
    ScanGeometry g;
    g.ntheta = 24;
    const double r = 0.5;
    const auto m = singularity_order_map(radon_forward(rasterize(disk_phantom(r), 200, 200), g));
    for (std::size_t j = 0; j < g.ntheta; ++j)
        for (std::size_t i = 0; i < g.ns; ++i) {
            if (!m.flagged[m.index(i, j)]) continue;
            EXPECT_LE(std::abs(std::abs(g.s(i)) - r), 2.0 * g.ds()) << "s = " << g.s(i);
        }
    EXPECT_GE(m.flagged_count(), 2 * g.ntheta);
}

// ---------------------------------------------------------------------------

TEST(TangencyCurve, CircleSitsAtRadius) {
    const ScanGeometry g;
    const auto curve = ellipse_tangency_curve(g, 0.6, 0.6);
    EXPECT_EQ(curve.size(), 2 * g.ntheta);
    for (const auto& c : curve) EXPECT_LE(std::abs(std::abs(g.s(c.i)) - 0.6), 0.5 * g.ds() + 1e-12);
}

TEST(TangencyCurve, EllipseSupportFunction) {
    const ScanGeometry g;
    const auto curve = ellipse_tangency_curve(g, 0.8, 0.3, {0.1, -0.2});
    for (const auto& c : curve) {
        const double th = g.theta(c.j);
        const double h = std::hypot(0.8 * std::cos(th), 0.3 * std::sin(th));
        const double s0 = 0.1 * std::cos(th) - 0.2 * std::sin(th);
        const double s = g.s(c.i);
        EXPECT_LE(std::min(std::abs(s - s0 - h), std::abs(s - s0 + h)), 0.5 * g.ds() + 1e-12);
    }
}

TEST(EdgeRatio, IdenticalSinogramsGiveEqualRatios) {
    ScanGeometry g;
    g.ntheta = 30;
    const Sinogram b = radon_forward(rasterize(annulus_phantom(0.9, 0.7, 0.4, 0.2), 100, 100), g);
    const auto r = edge_strength_ratio(b, b, ellipse_tangency_curve(g, 0.4, 0.2), ellipse_tangency_curve(g, 0.9, 0.7));
    EXPECT_EQ(r.ratio_nl, r.ratio_lin);
}

TEST(EdgeRatio, ConcentricDisksAreComparable) {
    ScanGeometry g;
    g.ntheta = 30;
    ImageGrid f = rasterize(disk_phantom(0.8), 200, 200);
    const ImageGrid inner = rasterize(disk_phantom(0.4), 200, 200);
    for (std::size_t q = 0; q < f.size(); ++q) f[q] += inner[q];
    const Sinogram b = radon_forward(f, g);
    const auto r = edge_strength_ratio(b, b, ellipse_tangency_curve(g, 0.4, 0.4), ellipse_tangency_curve(g, 0.8, 0.8));
    EXPECT_GT(r.ratio_lin, 0.3);
}

TEST(EdgeRatio, RejectsBadInput) {
    ScanGeometry g;
    g.ntheta = 4;
    const Sinogram b(g, 1.0);
    const auto curve = ellipse_tangency_curve(g, 0.5, 0.5);
    EXPECT_THROW(edge_strength_ratio(b, b, {}, curve), Error);
    EXPECT_THROW(edge_strength_ratio(b, b, curve, {}), Error);
    ScanGeometry other = g;
    other.ntheta = 5;
    EXPECT_THROW(edge_strength_ratio(b, Sinogram(other, 1.0), curve, curve), Error);
}
