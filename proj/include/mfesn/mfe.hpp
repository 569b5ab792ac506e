#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mfesn/rng.hpp"

namespace mfesn {

inline constexpr int kNumModes = 9;

// Mode amplitudes a(t); the full system state.
using Amplitudes = std::array<double, kNumModes>;

// Periodic box for the sinusoidal shear flow. The default box has streamwise
// period 1.75*pi and spanwise period 1.2*pi, for which the laminar state has
// kinetic energy lx*lz = 2.1*pi^2 ~= 20.726. (With a spanwise factor of 1.2
// instead of 1.2*pi the laminar energy would come out at 6.6, which is
// inconsistent with that target; see README for the constant's provenance.)
struct DomainGeometry {
    double lx = 1.75 * 3.14159265358979323846;
    double lz = 1.2 * 3.14159265358979323846;

    double alpha() const { return 2.0 * 3.14159265358979323846 / lx; }
    double beta() const { return 3.14159265358979323846 / 2.0; }
    double gamma() const { return 2.0 * 3.14159265358979323846 / lz; }
    double energy_prefactor() const { return lx * lz; }
};

// One quadratic interaction d a_j/dt += coef * a_k * a_l. Only nonzero
// entries are stored; contributions sharing (j, {k,l}) are pre-summed with
// k <= l so the right-hand side is a single flat loop.
struct QuadraticTerm {
    std::int8_t j, k, l;
    double coef;
};

// Reynolds-dependent coefficients of the nine-mode model, fixed after
// construction and shareable across threads.
struct MfeSystem {
    double re = 0.0;
    DomainGeometry geometry;
    double forcing = 0.0;                    // pi^2/(4 Re), drives mode 1
    std::array<double, kNumModes> linear{};  // decay rates alpha_j(Re)
    std::vector<QuadraticTerm> quadratic;
};

// Uniformly sampled state sequence: state i sits at t0 + i * dt_sample.
struct Trajectory {
    double t0 = 0.0;
    double dt_sample = 1.0;
    std::vector<Amplitudes> states;

    std::size_t size() const { return states.size(); }
    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt_sample; }
    double end_time() const { return states.empty() ? t0 : time(states.size() - 1); }
};

MfeSystem build_system(double re, const DomainGeometry& geometry = {});

inline void rhs_into(const MfeSystem& sys, const Amplitudes& a, Amplitudes& out) {
    for (int j = 0; j < kNumModes; ++j) out[j] = sys.linear[j] * a[j];
    out[0] += sys.forcing;
    for (const auto& term : sys.quadratic) out[term.j] += term.coef * a[term.k] * a[term.l];
}

inline Amplitudes rhs(const MfeSystem& sys, const Amplitudes& a) {
    Amplitudes out;
    rhs_into(sys, a, out);
    return out;
}

// Classical fourth-order Runge-Kutta update.
inline Amplitudes rk4_step(const MfeSystem& sys, const Amplitudes& a, double dt) {
    Amplitudes k1, k2, k3, k4, tmp;
    rhs_into(sys, a, k1);
    for (int j = 0; j < kNumModes; ++j) tmp[j] = a[j] + 0.5 * dt * k1[j];
    rhs_into(sys, tmp, k2);
    for (int j = 0; j < kNumModes; ++j) tmp[j] = a[j] + 0.5 * dt * k2[j];
    rhs_into(sys, tmp, k3);
    for (int j = 0; j < kNumModes; ++j) tmp[j] = a[j] + dt * k3[j];
    rhs_into(sys, tmp, k4);
    Amplitudes out;
    for (int j = 0; j < kNumModes; ++j)
        out[j] = a[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    return out;
}

// Integrates for `duration` time units, recording a sample every
// `sample_every` units (which must be an integer multiple of dt). Throws
// NumericalError with the failure time if the state leaves [-limit, limit]
// or becomes non-finite.
Trajectory integrate(const MfeSystem& sys, const Amplitudes& a0, double dt, double duration,
                     double sample_every = 1.0, double blowup_limit = 1.0e3, double t0 = 0.0);

double kinetic_energy(const Amplitudes& a, const DomainGeometry& geometry = {});

std::vector<double> energies(const Trajectory& trajectory, const DomainGeometry& geometry = {});

// The stable laminar profile [1, 0, ..., 0].
Amplitudes laminar_state();

// Draws components uniformly from [-1, 1] and rescales so the kinetic energy
// equals e_target exactly.
Amplitudes random_state_with_energy(Rng& rng, double e_target, const DomainGeometry& geometry = {});

}  // namespace mfesn
