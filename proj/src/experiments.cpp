#include "mfesn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfesn/errors.hpp"
#include "mfesn/parallel.hpp"

namespace mfesn {

namespace {

long window_sample_count(double window, double dt_sample) {
    if (!(dt_sample > 0.0)) throw ConfigError("detector: dt_sample must be positive");
    if (!(window > 0.0)) throw ConfigError("detector: window must be positive");
    const auto n = static_cast<long>(std::llround(window / dt_sample));
    if (n < 1 || std::abs(n * dt_sample - window) > 1e-9 * window)
        throw ConfigError("detector: window must be an integer multiple of dt_sample");
    return n;
}

}  // namespace

LaminarizationDetection detect_laminarization(std::span<const double> energy, double t0,
                                              double dt_sample, double threshold, double window) {
    const long needed = window_sample_count(window, dt_sample) + 1;
    if (static_cast<long>(energy.size()) < needed)
        return {LaminarizationDetection::Status::insufficient_data, 0.0};
    long run = 0;
    for (std::size_t i = 0; i < energy.size(); ++i) {
        run = energy[i] > threshold ? run + 1 : 0;
        if (run >= needed)
            return {LaminarizationDetection::Status::found, t0 + static_cast<double>(i) * dt_sample};
    }
    return {LaminarizationDetection::Status::not_found, 0.0};
}

RollingDetector::RollingDetector(double threshold, double window, double dt_sample)
    : threshold_(threshold), needed_(window_sample_count(window, dt_sample) + 1) {}

// ---------------------------------------------------------------------------

namespace {

double resolved_ic_energy(const LifetimeParams& params, const DomainGeometry& geometry) {
    return params.ic_energy > 0.0 ? params.ic_energy : 0.3 * geometry.energy_prefactor();
}

long checked_steps_per_sample(double sample_every, double dt) {
    const auto n = static_cast<long>(std::llround(sample_every / dt));
    if (n < 1 || std::abs(n * dt - sample_every) > 1e-9 * sample_every)
        throw ConfigError("lifetime: sample_every must be an integer multiple of dt");
    return n;
}

}  // namespace

std::vector<LifetimeSample> lifetime_experiment_truth(const MfeSystem& sys,
                                                      const LifetimeParams& params,
                                                      std::uint64_t seed, unsigned threads) {
    if (params.n_ic < 1) throw ConfigError("lifetime: n_ic must be positive");
    const double e_ic = resolved_ic_energy(params, sys.geometry);
    const long steps_per_sample = checked_steps_per_sample(params.sample_every, params.dt);
    const auto n_samples = static_cast<long>(std::llround(params.t_max / params.sample_every));

    std::vector<LifetimeSample> samples(static_cast<std::size_t>(params.n_ic));
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        Rng rng = make_stream(seed, StreamId::lifetime_ic, i);
        Amplitudes a = random_state_with_energy(rng, e_ic, sys.geometry);

        LifetimeSample sample;
        sample.source = LifetimeSource::truth;
        sample.unit_index = i;
        sample.t_max = params.t_max;

        RollingDetector detector(params.threshold, params.window, params.sample_every);
        detector.push(kinetic_energy(a, sys.geometry));
        sample.censored = true;
        sample.lifetime = params.t_max;
        for (long s = 1; s <= n_samples; ++s) {
            for (long k = 0; k < steps_per_sample; ++k) a = rk4_step(sys, a, params.dt);
            const double e = kinetic_energy(a, sys.geometry);
            if (!std::isfinite(e) || e > 1e9) {
                std::ostringstream msg;
                msg << "lifetime: reference integration blew up (ic " << i << ", t = "
                    << static_cast<double>(s) * params.sample_every << ")";
                throw NumericalError(msg.str());
            }
            if (detector.push(e)) {
                sample.censored = false;
                sample.lifetime = static_cast<double>(s) * params.sample_every;
                break;
            }
        }
        samples[i] = sample;
    });
    return samples;
}

std::vector<LifetimeSample> lifetime_experiment_esn(const EsnModel& model, const MfeSystem& sys,
                                                    const LifetimeParams& params,
                                                    std::uint64_t seed, unsigned threads) {
    if (params.n_ic < 1) throw ConfigError("lifetime: n_ic must be positive");
    if (!model.trained()) throw ConfigError("lifetime: model has no trained readout");
    if (std::abs(model.hp.dt_model - params.sample_every) > 1e-9 * params.sample_every)
        throw ConfigError("lifetime: sample_every must match the model's dt_model");
    const double e_ic = resolved_ic_energy(params, sys.geometry);
    const int n_sync = model.hp.n_sync;
    const auto n_samples = static_cast<long>(std::llround(params.t_max / params.sample_every));

    std::vector<LifetimeSample> samples(static_cast<std::size_t>(params.n_ic));
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        Rng ic_rng = make_stream(seed, StreamId::lifetime_ic, i);
        const Amplitudes a0 = random_state_with_energy(ic_rng, e_ic, sys.geometry);
        Rng noise = make_stream(seed, StreamId::lifetime_member, i);

        LifetimeSample sample;
        sample.source = LifetimeSource::esn;
        sample.unit_index = i;
        sample.t_max = params.t_max;
        sample.censored = true;
        sample.lifetime = params.t_max;

        // Reference-model prefix for synchronization, then autonomous roll-out.
        const Trajectory prefix = integrate(sys, a0, params.dt,
                                            (n_sync - 1) * params.sample_every,
                                            params.sample_every);
        RollingDetector detector(params.threshold, params.window, params.sample_every);
        bool found = false;
        for (const auto& state : prefix.states)
            if (detector.push(kinetic_energy(state, sys.geometry))) found = true;

        ReservoirRunner runner(model);
        {
            Rng sync_noise = noise;  // synchronize() consumes from the member stream
            runner.set_state(synchronize(model, prefix.states, sync_noise));
            noise = sync_noise;
        }
        Amplitudes current = prefix.states.back();
        for (long s = n_sync; !found && s <= n_samples; ++s) {
            runner.step(current, noise);
            current = runner.readout();
            bool bad = false;
            for (double v : current)
                if (!std::isfinite(v) || std::abs(v) > 1e3) bad = true;
            if (bad) {
                sample.diverged = true;
                sample.lifetime = static_cast<double>(s) * params.sample_every;
                break;
            }
            if (detector.push(kinetic_energy(current, sys.geometry))) {
                sample.censored = false;
                sample.lifetime = static_cast<double>(s) * params.sample_every;
                break;
            }
        }
        if (found) {  // criterion met already inside the prefix (tiny window only)
            sample.censored = false;
            sample.lifetime = prefix.end_time();
        }
        samples[i] = sample;
    });
    return samples;
}

// ---------------------------------------------------------------------------

SurvivalCurve survival_curve(std::span<const LifetimeSample> samples) {
    struct Entry {
        double time;
        bool event;
    };
    std::vector<Entry> entries;
    entries.reserve(samples.size());
    SurvivalCurve curve;
    for (const auto& s : samples) {
        if (s.diverged) continue;
        entries.push_back({s.lifetime, !s.censored});
        if (s.censored)
            ++curve.n_censored;
        else
            ++curve.n_events;
    }
    if (curve.n_events == 0) throw StatisticalError("survival_curve: no uncensored lifetimes");

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.event > b.event;  // events precede censorings at ties
    });

    curve.times.push_back(0.0);
    curve.survival.push_back(1.0);
    double s_value = 1.0;
    std::size_t i = 0;
    auto at_risk = static_cast<double>(entries.size());
    while (i < entries.size()) {
        const double t = entries[i].time;
        double events = 0.0, leaving = 0.0;
        while (i < entries.size() && entries[i].time == t) {
            if (entries[i].event) events += 1.0;
            leaving += 1.0;
            ++i;
        }
        if (events > 0.0) {
            s_value *= 1.0 - events / at_risk;
            curve.times.push_back(t);
            curve.survival.push_back(s_value);
        }
        at_risk -= leaving;
    }
    return curve;
}

double survival_at(const SurvivalCurve& curve, double t) {
    // S(t) = P(T >= t): the drop at an event time applies strictly after it.
    double value = 1.0;
    for (std::size_t i = 0; i < curve.times.size(); ++i) {
        if (curve.times[i] < t) value = curve.survival[i];
    }
    return value;
}

ExponentialFit fit_exponential_mle(std::span<const double> lifetimes) {
    if (lifetimes.size() < 2)
        throw StatisticalError("fit_exponential_mle: need at least two lifetimes");
    ExponentialFit fit;
    fit.n_samples = static_cast<int>(lifetimes.size());
    fit.t0 = *std::min_element(lifetimes.begin(), lifetimes.end());
    double excess = 0.0;
    for (double t : lifetimes) excess += t - fit.t0;
    fit.tau = excess / static_cast<double>(lifetimes.size());
    if (!(fit.tau > 0.0))
        throw StatisticalError("fit_exponential_mle: degenerate sample (all lifetimes equal)");
    return fit;
}

double shifted_exponential_survival(double t, const ExponentialFit& fit) {
    return t < fit.t0 ? 1.0 : std::exp(-(t - fit.t0) / fit.tau);
}

double ks_statistic_exponential(std::span<const double> lifetimes, const ExponentialFit& fit) {
    std::vector<double> sorted(lifetimes.begin(), lifetimes.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cdf = 1.0 - shifted_exponential_survival(sorted[i], fit);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    }
    return d;
}

// ---------------------------------------------------------------------------

namespace {

enum class MemberOutcome { survived, laminarized, diverged };

// One closed-loop member: synchronize on the prefix, then run `horizon` time
// units watching for the laminarization criterion.
MemberOutcome run_ensemble_member(const EsnModel& model, std::span<const Amplitudes> prefix,
                                  const EnsembleParams& params, Rng noise) {
    const double dt = model.hp.dt_model;
    const auto horizon_steps = static_cast<long>(std::llround(params.horizon / dt));
    RollingDetector detector(params.threshold, params.window, dt);

    ReservoirRunner runner(model);
    runner.set_state(synchronize(model, prefix, noise));
    Amplitudes current = prefix.back();
    DomainGeometry geometry;  // energy prefactor is geometry-fixed across the study
    if (detector.push(kinetic_energy(current, geometry))) return MemberOutcome::laminarized;
    for (long s = 1; s <= horizon_steps; ++s) {
        runner.step(current, noise);
        current = runner.readout();
        for (double v : current)
            if (!std::isfinite(v) || std::abs(v) > 1e3) return MemberOutcome::diverged;
        if (detector.push(kinetic_energy(current, geometry))) return MemberOutcome::laminarized;
    }
    return MemberOutcome::survived;
}

}  // namespace

TransitionProbabilityEstimate ensemble_transition_probability(
    const EsnModel& model, std::span<const Amplitudes> prefix, const EnsembleParams& params,
    std::uint64_t seed, double initial_time, std::uint64_t unit_base, unsigned threads) {
    if (params.n_ensemble < 1) throw ConfigError("ensemble: n_ensemble must be positive");

    std::vector<MemberOutcome> outcomes(static_cast<std::size_t>(params.n_ensemble));
    parallel_for(outcomes.size(), threads, [&](std::size_t m) {
        outcomes[m] = run_ensemble_member(
            model, prefix, params, make_stream(seed, StreamId::ensemble_member, unit_base + m));
    });

    TransitionProbabilityEstimate estimate;
    estimate.n_ensemble = params.n_ensemble;
    estimate.initial_time = initial_time;
    estimate.horizon = params.horizon;
    for (const auto outcome : outcomes) {
        if (outcome == MemberOutcome::laminarized) ++estimate.n_laminarized;
        if (outcome == MemberOutcome::diverged) ++estimate.n_diverged;
    }
    const int effective = estimate.n_ensemble - estimate.n_diverged;
    if (effective == 0) throw StatisticalError("ensemble: every member diverged");
    estimate.p = static_cast<double>(estimate.n_laminarized) / static_cast<double>(effective);
    return estimate;
}

ReferenceProbability reference_probability(const EsnModel& model,
                                           const std::vector<std::vector<Amplitudes>>& prefixes,
                                           const EnsembleParams& params, std::uint64_t seed,
                                           unsigned threads) {
    if (prefixes.empty()) throw ConfigError("reference_probability: no test states");
    ReferenceProbability result;
    result.per_state.reserve(prefixes.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        auto estimate = ensemble_transition_probability(
            model, prefixes[i], params, seed, static_cast<double>(i),
            i * static_cast<std::uint64_t>(params.n_ensemble), threads);
        result.mean += estimate.p;
        result.per_state.push_back(estimate);
    }
    result.mean /= static_cast<double>(prefixes.size());
    return result;
}

std::vector<TransitionProbabilityEstimate> early_warning_scan(
    const EsnModel& model, const Trajectory& truth, std::span<const double> times,
    const EnsembleParams& params, std::uint64_t seed, unsigned threads) {
    const int n_sync = model.hp.n_sync;
    std::vector<TransitionProbabilityEstimate> estimates;
    estimates.reserve(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double t_j = times[j];
        const auto idx = static_cast<long>(std::llround((t_j - truth.t0) / truth.dt_sample));
        if (std::abs(truth.t0 + static_cast<double>(idx) * truth.dt_sample - t_j) >
            1e-6 * std::max(1.0, std::abs(t_j)))
            throw ConfigError("early_warning_scan: time does not lie on the sample grid");
        if (idx < n_sync - 1 || idx >= static_cast<long>(truth.size())) {
            std::ostringstream msg;
            msg << "early_warning_scan: trajectory does not cover the history of t = " << t_j;
            throw ConfigError(msg.str());
        }
        const std::span<const Amplitudes> prefix(
            truth.states.data() + (idx - (n_sync - 1)), static_cast<std::size_t>(n_sync));
        estimates.push_back(ensemble_transition_probability(
            model, prefix, params, seed, t_j, j * static_cast<std::uint64_t>(params.n_ensemble),
            threads));
    }
    return estimates;
}

// ---------------------------------------------------------------------------

std::vector<double> log_spaced_energies(int n, double e_min, double e_max) {
    if (n < 2 || !(e_min > 0.0) || !(e_max > e_min))
        throw ConfigError("log_spaced_energies: need n >= 2 and 0 < e_min < e_max");
    std::vector<double> energies(static_cast<std::size_t>(n));
    const double log_min = std::log(e_min), log_max = std::log(e_max);
    for (int j = 0; j < n; ++j)
        energies[static_cast<std::size_t>(j)] =
            std::exp(log_min + (log_max - log_min) * static_cast<double>(j) /
                                   static_cast<double>(n - 1));
    energies.front() = e_min;
    energies.back() = e_max;
    return energies;
}

namespace {

struct PlamOutcome {
    bool turbulent = false;
    bool diverged = false;
};

LaminarizationCurve assemble_curve(const std::vector<double>& energies,
                                   const std::vector<PlamOutcome>& outcomes, int n_pert) {
    LaminarizationCurve curve;
    curve.energies = energies;
    curve.n_perturbations = n_pert;
    curve.p_lam.resize(energies.size());
    curve.n_diverged.resize(energies.size());
    for (std::size_t j = 0; j < energies.size(); ++j) {
        int turbulent = 0, diverged = 0;
        for (int m = 0; m < n_pert; ++m) {
            const auto& o = outcomes[j * static_cast<std::size_t>(n_pert) + m];
            if (o.diverged)
                ++diverged;
            else if (o.turbulent)
                ++turbulent;
        }
        const int effective = n_pert - diverged;
        if (effective == 0) throw StatisticalError("p_lam: every perturbation diverged");
        curve.p_lam[j] = 1.0 - static_cast<double>(turbulent) / static_cast<double>(effective);
        curve.n_diverged[j] = diverged;
    }
    return curve;
}

}  // namespace

LaminarizationCurve laminarization_probability_curve_truth(const MfeSystem& sys,
                                                           const PlamParams& params,
                                                           std::uint64_t seed, unsigned threads) {
    const auto energies = log_spaced_energies(params.n_energies, params.e_min, params.e_max);
    const long steps_per_sample = checked_steps_per_sample(params.sample_every, params.dt);
    const auto n_samples = static_cast<long>(std::llround(params.horizon / params.sample_every));
    const Amplitudes base = laminar_state();

    std::vector<PlamOutcome> outcomes(energies.size() * static_cast<std::size_t>(params.n_perturbations));
    parallel_for(outcomes.size(), threads, [&](std::size_t unit) {
        const std::size_t j = unit / static_cast<std::size_t>(params.n_perturbations);
        Rng rng = make_stream(seed, StreamId::plam_member, unit);
        const Amplitudes delta = random_state_with_energy(rng, energies[j], sys.geometry);
        Amplitudes a;
        for (int c = 0; c < kNumModes; ++c) a[c] = base[c] + delta[c];

        PlamOutcome outcome;
        if (kinetic_energy(a, sys.geometry) < params.turb_threshold) outcome.turbulent = true;
        for (long s = 1; !outcome.turbulent && s <= n_samples; ++s) {
            for (long k = 0; k < steps_per_sample; ++k) a = rk4_step(sys, a, params.dt);
            if (kinetic_energy(a, sys.geometry) < params.turb_threshold) outcome.turbulent = true;
        }
        outcomes[unit] = outcome;
    });
    return assemble_curve(energies, outcomes, params.n_perturbations);
}

LaminarizationCurve laminarization_probability_curve_esn(const EsnModel& model,
                                                         const MfeSystem& sys,
                                                         const PlamParams& params,
                                                         std::uint64_t seed, unsigned threads) {
    if (!model.trained()) throw ConfigError("p_lam: model has no trained readout");
    if (std::abs(model.hp.dt_model - params.sample_every) > 1e-9 * params.sample_every)
        throw ConfigError("p_lam: sample_every must match the model's dt_model");
    const auto energies = log_spaced_energies(params.n_energies, params.e_min, params.e_max);
    const int n_sync = model.hp.n_sync;
    const auto n_samples = static_cast<long>(std::llround(params.horizon / params.sample_every));
    const Amplitudes base = laminar_state();

    std::vector<PlamOutcome> outcomes(energies.size() * static_cast<std::size_t>(params.n_perturbations));
    parallel_for(outcomes.size(), threads, [&](std::size_t unit) {
        const std::size_t j = unit / static_cast<std::size_t>(params.n_perturbations);
        Rng rng = make_stream(seed, StreamId::plam_member, unit);
        const Amplitudes delta = random_state_with_energy(rng, energies[j], sys.geometry);
        Amplitudes a0;
        for (int c = 0; c < kNumModes; ++c) a0[c] = base[c] + delta[c];

        PlamOutcome outcome;
        const Trajectory prefix = integrate(sys, a0, params.dt,
                                            (n_sync - 1) * params.sample_every,
                                            params.sample_every);
        for (const auto& state : prefix.states)
            if (kinetic_energy(state, sys.geometry) < params.turb_threshold)
                outcome.turbulent = true;

        if (!outcome.turbulent) {
            ReservoirRunner runner(model);
            runner.set_state(synchronize(model, prefix.states, rng));
            Amplitudes current = prefix.states.back();
            for (long s = n_sync; s <= n_samples; ++s) {
                runner.step(current, rng);
                current = runner.readout();
                bool bad = false;
                for (double v : current)
                    if (!std::isfinite(v) || std::abs(v) > 1e3) bad = true;
                if (bad) {
                    outcome.diverged = true;
                    break;
                }
                if (kinetic_energy(current, sys.geometry) < params.turb_threshold) {
                    outcome.turbulent = true;
                    break;
                }
            }
        }
        outcomes[unit] = outcome;
    });
    return assemble_curve(energies, outcomes, params.n_perturbations);
}

}  // namespace mfesn
