#include <gtest/gtest.h>

#include "cst/physics.hpp"

using namespace cst;

TEST(Kinematics, NinetyDegreeScatterAtOneMeV) {
    // E / (1 + E/E0) with E = 1 MeV, E0 = 0.51099895 MeV
    const double oracle = 1.0 / (1.0 + 1.0 / 0.51099895);
    EXPECT_NEAR(scattered_energy(1.0, std::numbers::pi / 2.0), oracle, 1e-14);
    EXPECT_NEAR(scattered_energy(1.0, std::numbers::pi / 2.0), 0.338, 0.001);
}

TEST(Kinematics, ForwardScatterKeepsEnergy) { EXPECT_DOUBLE_EQ(scattered_energy(1.17, 0.0), 1.17); }

TEST(Kinematics, MonotoneInAngle) {
    double prev = scattered_energy(1.17, 0.0);
    for (int k = 1; k <= 100; ++k) {
        const double e = scattered_energy(1.17, std::numbers::pi * k / 100.0);
        EXPECT_LT(e, prev);
        prev = e;
    }
}

TEST(Kinematics, RejectsBadArguments) {
    EXPECT_THROW(scattered_energy(-1.0, 0.5), Error);
    EXPECT_THROW(scattered_energy(1.0, 4.0), Error);
}

TEST(KleinNishina, ThomsonLimitAtZeroAngle) {
    EXPECT_NEAR(klein_nishina(1.17, 0.0) / classical_electron_radius_sq_cm2, 1.0, 1e-14);
}

TEST(KleinNishina, LowEnergyApproachesThomson) {
    const double w = 1.0;
    const double thomson = 0.5 * classical_electron_radius_sq_cm2 * (1.0 + std::cos(w) * std::cos(w));
    EXPECT_NEAR(klein_nishina(1e-6, w) / thomson, 1.0, 1e-5);
}

TEST(PhysicsParams, OmegaAndValidation) {
    PhysicsParams p;
    EXPECT_DOUBLE_EQ(p.omega(), std::numbers::pi / 2.0);
    p.psi = 0.5; // omega > pi/2, backward scattering
    EXPECT_THROW(p.validate(), Error);
    p.psi = std::numbers::pi / 3.0;
    EXPECT_NO_THROW(p.validate());
    p.a = -1.0;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Lambda, ConstantAndCrossSectionModes) {
    PhysicsParams p;
    p.lambda_value = 2.5;
    EXPECT_EQ(lambda_weight(p), 2.5);
    p.lambda_mode = LambdaMode::klein_nishina;
    p.intensity = 3.0;
    EXPECT_DOUBLE_EQ(lambda_weight(p), 3.0 * klein_nishina(p.energy, p.omega()));
}
