#include "mfesn/mfe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "mfesn/errors.hpp"

namespace mfesn {

namespace {

bool all_finite(const Amplitudes& a, double limit) {
    for (double v : a)
        if (!std::isfinite(v) || std::abs(v) > limit) return false;
    return true;
}

}  // namespace

MfeSystem build_system(double re, const DomainGeometry& geometry) {
    if (!(re > 0.0)) throw ConfigError("build_system: Reynolds number must be positive");
    if (!(geometry.lx > 0.0) || !(geometry.lz > 0.0))
        throw ConfigError("build_system: degenerate domain geometry");

    const double a = geometry.alpha();
    const double b = geometry.beta();
    const double g = geometry.gamma();
    const double a2 = a * a, b2 = b * b, g2 = g * g;
    const double kag = std::sqrt(a2 + g2);
    const double kbg = std::sqrt(b2 + g2);
    const double kabg = std::sqrt(a2 + b2 + g2);
    const double s6 = std::sqrt(6.0);
    const double s32 = std::sqrt(1.5);

    MfeSystem sys;
    sys.re = re;
    sys.geometry = geometry;
    sys.forcing = b2 / re;
    sys.linear = {
        -b2 / re,
        -(4.0 * b2 / 3.0 + g2) / re,
        -(b2 + g2) / re,
        -(3.0 * a2 + 4.0 * b2) / (3.0 * re),
        -(a2 + b2) / re,
        -(3.0 * a2 + 4.0 * b2 + 3.0 * g2) / (3.0 * re),
        -(a2 + b2 + g2) / re,
        -(a2 + b2 + g2) / re,
        -9.0 * b2 / re,
    };

    // Quadratic interactions of the nine-mode truncation, one tuple per term
    // (j, k, l, coefficient), 0-based mode indices.
    const struct {
        int j, k, l;
        double coef;
    } terms[] = {
        {0, 5, 7, -s32 * b * g / kabg},
        {0, 1, 2, s32 * b * g / kbg},
        {1, 3, 5, 5.0 / 3.0 * std::sqrt(2.0 / 3.0) * g2 / kag},
        {1, 4, 6, -g2 / (s6 * kag)},
        {1, 4, 7, -a * b * g / (s6 * kag * kabg)},
        {1, 0, 2, -s32 * b * g / kbg},
        {1, 2, 8, -s32 * b * g / kbg},
        {2, 3, 6, 2.0 * a * b * g / (s6 * kag * kbg)},
        {2, 4, 5, 2.0 * a * b * g / (s6 * kag * kbg)},
        {2, 3, 7, (b2 * (3.0 * a2 + g2) - 3.0 * g2 * (a2 + g2)) / (s6 * kag * kbg * kabg)},
        {3, 0, 4, -a / s6},
        {3, 1, 5, -10.0 * a2 / (3.0 * s6 * kag)},
        {3, 2, 6, -s32 * a * b * g / (kag * kbg)},
        {3, 2, 7, -s32 * a2 * b2 / (kag * kbg * kabg)},
        {3, 4, 8, -a / s6},
        {4, 0, 3, a / s6},
        {4, 1, 6, a2 / (s6 * kag)},
        {4, 1, 7, -a * b * g / (s6 * kag * kabg)},
        {4, 3, 8, a / s6},
        {4, 2, 5, 2.0 * a * b * g / (s6 * kag * kbg)},
        {5, 0, 6, a / s6},
        {5, 0, 7, s32 * b * g / kabg},
        {5, 1, 3, 10.0 * (a2 - g2) / (3.0 * s6 * kag)},
        {5, 2, 4, -2.0 * std::sqrt(2.0 / 3.0) * a * b * g / (kag * kbg)},
        {5, 6, 8, a / s6},
        {5, 7, 8, s32 * b * g / kabg},
        {6, 0, 5, -a / s6},
        {6, 5, 8, -a / s6},
        {6, 1, 4, (g2 - a2) / (s6 * kag)},
        {6, 2, 3, a * b * g / (s6 * kag * kbg)},
        {7, 1, 4, 2.0 * a * b * g / (s6 * kag * kabg)},
        {7, 2, 3, g2 * (3.0 * a2 - b2 + 3.0 * g2) / (s6 * kag * kbg * kabg)},
        {8, 1, 2, s32 * b * g / kbg},
        {8, 5, 7, -s32 * b * g / kabg},
    };

    // Pre-sum duplicates onto the canonical (j, k <= l) key and drop zeros.
    std::map<std::tuple<int, int, int>, double> merged;
    for (const auto& t : terms) {
        const int k = std::min(t.k, t.l), l = std::max(t.k, t.l);
        merged[{t.j, k, l}] += t.coef;
    }
    sys.quadratic.reserve(merged.size());
    for (const auto& [key, coef] : merged) {
        if (coef == 0.0) continue;
        sys.quadratic.push_back({static_cast<std::int8_t>(std::get<0>(key)),
                                 static_cast<std::int8_t>(std::get<1>(key)),
                                 static_cast<std::int8_t>(std::get<2>(key)), coef});
    }
    return sys;
}

Trajectory integrate(const MfeSystem& sys, const Amplitudes& a0, double dt, double duration,
                     double sample_every, double blowup_limit, double t0) {
    if (!(dt > 0.0)) throw ConfigError("integrate: dt must be positive");
    if (!(duration > 0.0)) throw ConfigError("integrate: duration must be positive");
    const auto steps_per_sample = static_cast<long>(std::llround(sample_every / dt));
    if (steps_per_sample < 1 || std::abs(steps_per_sample * dt - sample_every) > 1e-9 * sample_every)
        throw ConfigError("integrate: sample_every must be an integer multiple of dt");
    const auto n_samples = static_cast<long>(std::llround(duration / sample_every));
    if (std::abs(n_samples * sample_every - duration) > 1e-9 * std::max(1.0, duration))
        throw ConfigError("integrate: duration must be an integer multiple of sample_every");

    Trajectory out;
    out.t0 = t0;
    out.dt_sample = sample_every;
    out.states.reserve(static_cast<std::size_t>(n_samples) + 1);

    Amplitudes a = a0;
    if (!all_finite(a, blowup_limit)) throw NumericalError("integrate: non-finite initial state");
    out.states.push_back(a);
    for (long s = 1; s <= n_samples; ++s) {
        for (long i = 0; i < steps_per_sample; ++i) {
            a = rk4_step(sys, a, dt);
            if (!all_finite(a, blowup_limit)) {
                std::ostringstream msg;
                msg << "integrate: state blew up at t = "
                    << t0 + (static_cast<double>(s - 1) * steps_per_sample + i + 1) * dt;
                throw NumericalError(msg.str());
            }
        }
        out.states.push_back(a);
    }
    return out;
}

double kinetic_energy(const Amplitudes& a, const DomainGeometry& geometry) {
    double sum = 0.0;
    for (double v : a) sum += v * v;
    return geometry.energy_prefactor() * sum;
}

std::vector<double> energies(const Trajectory& trajectory, const DomainGeometry& geometry) {
    std::vector<double> out;
    out.reserve(trajectory.states.size());
    for (const auto& a : trajectory.states) out.push_back(kinetic_energy(a, geometry));
    return out;
}

Amplitudes laminar_state() {
    Amplitudes a{};
    a[0] = 1.0;
    return a;
}

Amplitudes random_state_with_energy(Rng& rng, double e_target, const DomainGeometry& geometry) {
    if (!(e_target > 0.0)) throw ConfigError("random_state_with_energy: energy must be positive");
    for (int attempt = 0; attempt < 100; ++attempt) {
        Amplitudes a;
        double sum = 0.0;
        for (double& v : a) {
            v = rng.uniform_sym(1.0);
            sum += v * v;
        }
        if (sum == 0.0) continue;
        const double scale = std::sqrt(e_target / (geometry.energy_prefactor() * sum));
        for (double& v : a) v *= scale;
        return a;
    }
    throw NumericalError("random_state_with_energy: drew the zero vector repeatedly");
}

}  // namespace mfesn
