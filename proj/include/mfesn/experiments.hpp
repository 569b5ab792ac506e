#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mfesn/esn.hpp"
#include "mfesn/mfe.hpp"

namespace mfesn {

// ---------------------------------------------------------------------------
// Laminarization detection

struct LaminarizationDetection {
    enum class Status { found, not_found, insufficient_data };
    Status status = Status::not_found;
    double time = 0.0;  // earliest T with E > threshold over all of [T - window, T]
};

// Scans a uniformly sampled energy series for the first time T such that
// every sample in [T - window, T] exceeds `threshold`. `window` must be an
// integer multiple of dt_sample.
LaminarizationDetection detect_laminarization(std::span<const double> energy, double t0,
                                              double dt_sample, double threshold = 15.0,
                                              double window = 1000.0);

// Streaming form of the same rule for loops that do not keep the series.
class RollingDetector {
  public:
    RollingDetector(double threshold, double window, double dt_sample);

    // Feed the next sample; returns true the first time the criterion is met.
    bool push(double energy) {
        run_ = energy > threshold_ ? run_ + 1 : 0;
        return run_ >= needed_;
    }
    void reset() { run_ = 0; }

  private:
    double threshold_;
    long needed_;  // consecutive qualifying samples, window/dt + 1
    long run_ = 0;
};

// ---------------------------------------------------------------------------
// Lifetime experiment

enum class LifetimeSource { truth, esn };

struct LifetimeSample {
    double lifetime = 0.0;  // detection time T; equals t_max when censored
    bool censored = false;
    bool diverged = false;  // prediction blew up; censored-with-failure
    double t_max = 0.0;
    LifetimeSource source = LifetimeSource::truth;
    std::uint64_t unit_index = 0;  // stream index of this initial condition
};

struct LifetimeParams {
    int n_ic = 200;
    double ic_energy = 0.0;  // 0 means 0.3 * lx * lz for the system's geometry
    double t_max = 60000.0;
    double threshold = 15.0;
    double window = 1000.0;
    double dt = 1e-3;
    double sample_every = 1.0;
};

// Time-integrates n_ic random initial conditions of fixed kinetic energy and
// records the first time the laminarization criterion is met.
std::vector<LifetimeSample> lifetime_experiment_truth(const MfeSystem& sys,
                                                      const LifetimeParams& params,
                                                      std::uint64_t seed, unsigned threads = 0);

// Same protocol through the network: each initial condition is advanced by
// the reference model for n_sync samples to build the synchronization prefix,
// then the prediction runs autonomously until detection, censoring or blow-up.
std::vector<LifetimeSample> lifetime_experiment_esn(const EsnModel& model, const MfeSystem& sys,
                                                    const LifetimeParams& params,
                                                    std::uint64_t seed, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Survival statistics

struct SurvivalCurve {
    std::vector<double> times;     // starts at 0
    std::vector<double> survival;  // S(t) immediately after each time; starts at 1
    int n_events = 0;
    int n_censored = 0;
};

// Product-limit estimate; censored samples stay in the at-risk set up to
// their horizon. Diverged samples are dropped (reported via n_censored of the
// caller's accounting, not here). Throws StatisticalError when no uncensored
// sample exists.
SurvivalCurve survival_curve(std::span<const LifetimeSample> samples);

// S(t) evaluated from the step curve.
double survival_at(const SurvivalCurve& curve, double t);

struct ExponentialFit {
    double t0 = 0.0;   // onset delay
    double tau = 0.0;  // mean excess lifetime, 1 / escape rate
    int n_samples = 0;
};

// Closed-form MLE of the shifted exponential: t0 = min T_i,
// tau = mean(T_i - t0). Throws StatisticalError for n < 2 or all-equal input.
ExponentialFit fit_exponential_mle(std::span<const double> lifetimes);

// One-sample Kolmogorov-Smirnov distance between the empirical lifetimes and
// the fitted shifted exponential law.
double ks_statistic_exponential(std::span<const double> lifetimes, const ExponentialFit& fit);

// Survival law S(t) = exp(-(t - t0)/tau) for t >= t0, else 1.
double shifted_exponential_survival(double t, const ExponentialFit& fit);

// ---------------------------------------------------------------------------
// Ensemble transition probabilities

struct TransitionProbabilityEstimate {
    double p = 0.0;            // n_laminarized / (n_ensemble - n_diverged)
    int n_ensemble = 0;        // requested members
    int n_laminarized = 0;
    int n_diverged = 0;        // excluded from the denominator
    double initial_time = 0.0;
    double horizon = 0.0;
};

struct EnsembleParams {
    int n_ensemble = 100;
    double horizon = 2000.0;
    double threshold = 15.0;
    double window = 1000.0;
};

// Probability that the flow laminarizes within `horizon` given the recent
// history `prefix` (exactly n_sync states ending at the forecast start).
// Every member synchronizes and predicts with its own noise stream; ensemble
// spread comes entirely from the reservoir noise.
TransitionProbabilityEstimate ensemble_transition_probability(
    const EsnModel& model, std::span<const Amplitudes> prefix, const EnsembleParams& params,
    std::uint64_t seed, double initial_time = 0.0, std::uint64_t unit_base = 0,
    unsigned threads = 0);

struct ReferenceProbability {
    double mean = 0.0;
    std::vector<TransitionProbabilityEstimate> per_state;
};

// Average transition probability over typical turbulent states; the baseline
// an early-warning signal is compared against.
ReferenceProbability reference_probability(const EsnModel& model,
                                           const std::vector<std::vector<Amplitudes>>& prefixes,
                                           const EnsembleParams& params, std::uint64_t seed,
                                           unsigned threads = 0);

// Ensemble probabilities at the given times along a reference trajectory;
// prefixes are cut from the trajectory itself. Rejects times whose history
// window is not covered.
std::vector<TransitionProbabilityEstimate> early_warning_scan(
    const EsnModel& model, const Trajectory& truth, std::span<const double> times,
    const EnsembleParams& params, std::uint64_t seed, unsigned threads = 0);

// ---------------------------------------------------------------------------
// Laminarization probability (basin statistics)

struct PlamParams {
    int n_energies = 20;
    double e_min = 1e-4;
    double e_max = 1.0;
    int n_perturbations = 50;
    double horizon = 300.0;
    double turb_threshold = 10.0;
    double dt = 1e-3;
    double sample_every = 1.0;
};

struct LaminarizationCurve {
    std::vector<double> energies;  // strictly increasing, log-spaced
    std::vector<double> p_lam;     // fraction of perturbations that decay
    std::vector<int> n_diverged;   // per energy level
    int n_perturbations = 0;
};

std::vector<double> log_spaced_energies(int n, double e_min, double e_max);

// P_lam(E): fraction of random perturbations of energy E on top of the
// laminar state whose evolution never drops below turb_threshold within the
// horizon.
LaminarizationCurve laminarization_probability_curve_truth(const MfeSystem& sys,
                                                           const PlamParams& params,
                                                           std::uint64_t seed,
                                                           unsigned threads = 0);

// Network variant: each perturbation is advanced by the reference model for
// n_sync samples to synchronize, then evolved autonomously.
LaminarizationCurve laminarization_probability_curve_esn(const EsnModel& model,
                                                         const MfeSystem& sys,
                                                         const PlamParams& params,
                                                         std::uint64_t seed,
                                                         unsigned threads = 0);

}  // namespace mfesn
