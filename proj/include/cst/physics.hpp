#pragma once

#include <cmath>
#include <numbers>

#include "cst/error.hpp"

namespace cst {

inline constexpr double electron_rest_energy_mev = 0.51099895;
/// Classical electron radius squared, cm^2.
inline constexpr double classical_electron_radius_sq_cm2 = 2.8179403262e-13 * 2.8179403262e-13;

enum class LambdaMode { constant, klein_nishina };

struct PhysicsParams {
    double energy = 1.17;                      // MeV
    double rest_energy = electron_rest_energy_mev; // MeV
    double psi = std::numbers::pi / 4.0;       // V-line half opening angle
    double a = 1.0;                            // attenuation weight at E
    double b = 1.0;                            // attenuation weight at E_s
    double intensity = 1.0;                    // I0
    LambdaMode lambda_mode = LambdaMode::constant;
    double lambda_value = 1.0;

    /// Scattering angle omega = pi - 2 psi.
    double omega() const { return std::numbers::pi - 2.0 * psi; }

    void validate() const {
        require(energy > 0.0 && rest_energy > 0.0, "energies must be positive");
        require(psi > 0.0 && 2.0 * psi < std::numbers::pi, "psi must satisfy 0 < 2 psi < pi");
        require(omega() <= std::numbers::pi / 2.0 + 1e-12, "forward scattering requires psi >= pi/4");
        require(a >= 0.0 && b >= 0.0, "attenuation weights must be non-negative");
        require(intensity > 0.0, "source intensity must be positive");
        if (lambda_mode == LambdaMode::constant) require(lambda_value > 0.0, "lambda must be positive");
    }
};

/// Compton relation E_s = E / (1 + (E/E0)(1 - cos omega)).
inline double scattered_energy(double energy, double omega, double rest_energy = electron_rest_energy_mev) {
    require(energy > 0.0, "energy must be positive");
    require(omega >= 0.0 && omega <= std::numbers::pi, "scattering angle must lie in [0, pi]");
    return energy / (1.0 + (energy / rest_energy) * (1.0 - std::cos(omega)));
}

/// Klein-Nishina differential cross-section per electron, cm^2/sr.
inline double klein_nishina(double energy, double omega, double rest_energy = electron_rest_energy_mev) {
    const double ratio = scattered_energy(energy, omega, rest_energy) / energy;
    const double sin2 = std::sin(omega) * std::sin(omega);
    return 0.5 * classical_electron_radius_sq_cm2 * ratio * ratio * (ratio + 1.0 / ratio - sin2);
}

/// Scan constant lambda = I0 * dsigma/dOmega(E, omega), or the configured constant.
inline double lambda_weight(const PhysicsParams& p) {
    p.validate();
    if (p.lambda_mode == LambdaMode::constant) return p.lambda_value;
    return p.intensity * klein_nishina(p.energy, p.omega(), p.rest_energy);
}

} // namespace cst
