#include <gtest/gtest.h>

#include "cst/phantom.hpp"
#include "test_support.hpp"

using namespace cst;

namespace {

double mask_area(const ImageGrid& g) {
    double s = 0.0;
    for (double v : g.values()) s += v;
    return s * g.cell_area();
}

} // namespace

TEST(Phantom, DiskAreaMatchesAnalytic) {
    const auto g = rasterize(disk_phantom(0.5), 200, 200);
    EXPECT_NEAR(mask_area(g), std::numbers::pi * 0.25, 2e-3);
}

TEST(Phantom, SupportMaskIsBinary) {
    const auto m = support_mask(builtin_phantom(PhantomName::non_convex), 64, 64);
    for (double v : m.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Phantom, AnnulusHasHole) {
    const auto p = builtin_phantom(PhantomName::elliptic_annulus);
    EXPECT_FALSE(in_support(p, {0.0, 0.0}));
    EXPECT_TRUE(in_support(p, {0.55, 0.0}));
    EXPECT_TRUE(in_support(p, {0.0, 0.4}));
    EXPECT_FALSE(in_support(p, {0.0, 0.75}));
    EXPECT_FALSE(in_support(p, {0.3, 0.0}));
}

TEST(Phantom, NonConvexShapeIsNotConvex) {
    const auto p = builtin_phantom(PhantomName::non_convex);
    const Point2 a{-0.3, 0.25}, b{0.3, 0.25};
    ASSERT_TRUE(in_support(p, a));
    ASSERT_TRUE(in_support(p, b));
    EXPECT_FALSE(in_support(p, 0.5 * (a + b)));
}

TEST(Phantom, AmplitudeMustStayPositive) {
    auto p = disk_phantom(0.5);
    p.amplitude.coeffs = {0.0, 1.0, 0.0, 0.0, 0.0, 0.0}; // u = x, negative on the left half
    EXPECT_THROW(rasterize(p, 16, 16), Error);
    p.positive = false;
    EXPECT_NO_THROW(rasterize(p, 16, 16));
}

TEST(Phantom, QuadraticAmplitude) {
    auto p = disk_phantom(0.9);
    p.amplitude.coeffs = {1.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    const Point2 q{0.2, -0.1};
    EXPECT_DOUBLE_EQ(evaluate(p, q), 1.0 + 0.02 - 0.02 + 0.3 * 0.04 - 0.4 * 0.02 + 0.5 * 0.01);
}

TEST(Phantom, GaussianBlobProfile) {
    const auto p = builtin_phantom(PhantomName::gaussian);
    EXPECT_DOUBLE_EQ(evaluate(p, {0.0, 0.0}), 1.0);
    EXPECT_NEAR(evaluate(p, {0.15, 0.0}), std::exp(-0.5), 1e-15);
    EXPECT_EQ(evaluate(p, {0.95, 0.0}), 0.0);
}

TEST(Phantom, ParseNames) {
    EXPECT_EQ(parse_phantom_name("square"), PhantomName::square);
    EXPECT_FALSE(parse_phantom_name("shepp").has_value());
    EXPECT_THROW(builtin_phantom("nope"), Error);
}

TEST(Phantom, PolygonEvenOddRule) {
    PhantomSpec p;
    p.shapes = {{Polygon{{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}}, false}};
    EXPECT_TRUE(in_support(p, {0.1, 0.2}));
    EXPECT_FALSE(in_support(p, {0.6, 0.2}));
    p.shapes = {{Polygon{{{0.0, 0.0}, {1.0, 0.0}}}, false}};
    EXPECT_THROW(validate(p), Error);
}

// Property: supersampled rasterization is bounded by [0, max amplitude] and
// equals the center indicator when supersample = 1.
TEST(Phantom, RasterizationBounds) {
    check::Gen gen(5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = disk_phantom(gen.uniform(0.1, 0.8), {gen.uniform(-0.2, 0.2), gen.uniform(-0.2, 0.2)});
        const auto fine = rasterize(p, 32, 32);
        const auto centers = rasterize(p, 32, 32, {}, {1});
        const auto mask = support_mask(p, 32, 32);
        for (std::size_t k = 0; k < fine.size(); ++k) {
            EXPECT_GE(fine[k], 0.0);
            EXPECT_LE(fine[k], 1.0);
            EXPECT_EQ(centers[k], mask[k]);
        }
    }
}
