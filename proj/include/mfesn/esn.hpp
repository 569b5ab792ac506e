#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <span>
#include <vector>

#include "mfesn/mfe.hpp"
#include "mfesn/rng.hpp"

namespace mfesn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int32_t>;

struct EsnHyperparameters {
    int n_reservoir = 1500;
    double spectral_radius = 0.5;
    double sparsity = 0.9;          // probability that an entry of W is exactly zero
    double noise_amplitude = 1e-3;  // xi in the reservoir update
    double input_scale = 1.0;
    double bias_scale = 1.0;
    double dt_model = 1.0;          // sampling interval the network is trained at
    double ridge = 0.0;             // optional Tikhonov term, 0 = plain least squares
    int n_sync = 10;                // states consumed by synchronize()
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Reservoir with fixed random weights and a trained linear readout. w, w_in
// and bias never change after construction; only w_out is(re)trained.
// Immutable once trained, safe to share across threads.
struct EsnModel {
    EsnHyperparameters hp;
    SparseMatrix w;         // n_r x n_r, sparse
    Eigen::MatrixXd w_in;   // n_r x 9
    Eigen::VectorXd bias;   // n_r
    Eigen::MatrixXd w_out;  // 9 x (n_r + 1); empty until trained

    bool trained() const { return w_out.size() > 0; }
    double zero_fraction() const;
};

using ReservoirState = Eigen::VectorXd;

struct SpectralRadiusEstimate {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Power iteration for the dominant eigenvalue magnitude. A two-term
// recurrence fit on successive iterates also resolves complex conjugate
// dominant pairs, which random matrices routinely have.
SpectralRadiusEstimate estimate_spectral_radius(const SparseMatrix& w, double tol = 1e-6,
                                                int max_iter = 10000);
SpectralRadiusEstimate estimate_spectral_radius(const Eigen::MatrixXd& w, double tol = 1e-6,
                                                int max_iter = 10000);

// Draws w (sparse, entries uniform in [-1,1], rescaled to the requested
// spectral radius), w_in and bias (dense uniform). Fill order is fixed, so
// equal seeds give identical models. Throws NumericalError if the raw w has
// spectral radius below 1e-12 and cannot be rescaled.
EsnModel init_reservoir(const EsnHyperparameters& hp);

// Owns one reservoir state and the scratch buffers for stepping it; each
// thread / ensemble member uses a private runner over the shared model.
class ReservoirRunner {
  public:
    explicit ReservoirRunner(const EsnModel& model);

    void reset() { r_.setZero(); }
    void set_state(const ReservoirState& r) { r_ = r; }
    const ReservoirState& state() const { return r_; }

    // r <- tanh(b + W r + W_in input) + xi * Z, Z fresh uniform [-0.5, 0.5]^n
    void step(const Amplitudes& input, Rng& noise, bool noise_on = true);

    // w_out [r; 1], the flow-space image of the current reservoir state
    Amplitudes readout() const;

  private:
    const EsnModel* model_;
    ReservoirState r_;
    Eigen::VectorXd scratch_;
};

// Teacher-forced pass: one reservoir state per input, starting from r0.
std::vector<ReservoirState> drive(const EsnModel& model, std::span<const Amplitudes> inputs,
                                  const ReservoirState& r0, Rng& noise, bool noise_on = true);

struct TrainingReport {
    double residual_ss = 0.0;        // || R w_out^T - A ||_F^2 at the solution
    double target_ss = 0.0;          // || A ||_F^2, for relative residual
    Eigen::Index n_rows = 0;         // regression rows N_t
    Eigen::Index rank = 0;
    bool rank_deficient = false;     // solved via complete orthogonal fallback
    bool short_training_set = false; // fewer states than n_reservoir + 2
};

// Drives the reservoir over the training inputs from r = 0 (the first state
// seeds the first prediction only), then solves the readout regression
// min || R w_out^T - A ||^2 by Householder QR. Replaces any previous readout.
TrainingReport train_readout(EsnModel& model, const Trajectory& training, Rng& noise);

// Warm-up from the zero reservoir state across the transitions between the
// given states (exactly n_sync of them). The returned state is aligned in
// time with recent.back(), which should seed the closed-loop prediction.
ReservoirState synchronize(const EsnModel& model, std::span<const Amplitudes> recent, Rng& noise,
                           bool noise_on = true);

// Closed-loop prediction: feeds the readout back as input for `horizon`
// steps. Returned trajectory holds a0 followed by the horizon predictions,
// sampled at dt_model starting from t0. Throws NumericalError if the
// prediction leaves [-1e3, 1e3].
Trajectory predict(const EsnModel& model, const ReservoirState& r0, const Amplitudes& a0,
                   long horizon, Rng& noise, bool noise_on = true, double t0 = 0.0);

}  // namespace mfesn
