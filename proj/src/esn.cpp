#include "mfesn/esn.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "mfesn/errors.hpp"

namespace mfesn {

void EsnHyperparameters::validate() const {
    if (n_reservoir < kNumModes) throw ConfigError("esn: n_reservoir must be >= 9");
    if (!(spectral_radius > 0.0)) throw ConfigError("esn: spectral_radius must be positive");
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("esn: sparsity must be in [0, 1)");
    if (!(noise_amplitude >= 0.0)) throw ConfigError("esn: noise_amplitude must be >= 0");
    if (!(input_scale > 0.0)) throw ConfigError("esn: input_scale must be positive");
    if (!(bias_scale > 0.0)) throw ConfigError("esn: bias_scale must be positive");
    if (!(dt_model > 0.0)) throw ConfigError("esn: dt_model must be positive");
    if (!(ridge >= 0.0)) throw ConfigError("esn: ridge must be >= 0");
    if (n_sync < 2) throw ConfigError("esn: n_sync must be at least 2");
}

double EsnModel::zero_fraction() const {
    const double total = static_cast<double>(hp.n_reservoir) * hp.n_reservoir;
    return 1.0 - static_cast<double>(w.nonZeros()) / total;
}

namespace {

using MatVec = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Power iteration with a two-dimensional Krylov fit: y = W x_k is expressed
// as a x_k + b x_{k-1}, giving the characteristic roots of the dominant
// (possibly complex) pair. Converges when the magnitude estimate is stable
// for three consecutive iterations.
SpectralRadiusEstimate power_iteration(Eigen::Index n, const MatVec& apply, double tol,
                                       int max_iter) {
    Rng rng(0x5eed0f00dULL);  // fixed start vector: the estimate is deterministic
    Eigen::VectorXd x(n), x_prev(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.uniform_sym(1.0);
    x.normalize();

    double scale = 0.0;  // norm linking x_prev to x
    double estimate = 0.0;
    int stable = 0;
    for (int iter = 1; iter <= max_iter; ++iter) {
        apply(x, y);
        const double ny = y.norm();
        if (ny < 1e-300) return {ny, true, iter};

        double rho;
        if (iter == 1) {
            rho = ny;
        } else {
            const double g = x.dot(x_prev);
            const double r1 = y.dot(x);
            const double r2 = y.dot(x_prev);
            const double det = 1.0 - g * g;
            double a, b;
            if (std::abs(det) > 1e-12) {
                a = (r1 - g * r2) / det;
                b = (r2 - g * r1) / det;
            } else {
                a = r1;
                b = 0.0;
            }
            const double c0 = b * scale;
            const double disc = 0.25 * a * a + c0;
            if (disc >= 0.0) {
                const double root = std::sqrt(disc);
                rho = std::max(std::abs(0.5 * a + root), std::abs(0.5 * a - root));
            } else {
                rho = std::sqrt(-c0);  // complex pair: |lambda|^2 = -c0
            }
        }

        if (std::abs(rho - estimate) <= tol * std::max(rho, 1e-30)) {
            if (++stable >= 3) return {rho, true, iter};
        } else {
            stable = 0;
        }
        estimate = rho;

        x_prev = x;
        scale = ny;
        x = y / ny;
    }
    return {estimate, false, max_iter};
}

}  // namespace

SpectralRadiusEstimate estimate_spectral_radius(const SparseMatrix& w, double tol, int max_iter) {
    if (w.rows() != w.cols()) throw ConfigError("estimate_spectral_radius: matrix must be square");
    return power_iteration(
        w.rows(), [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out.noalias() = w * v; },
        tol, max_iter);
}

SpectralRadiusEstimate estimate_spectral_radius(const Eigen::MatrixXd& w, double tol,
                                                int max_iter) {
    if (w.rows() != w.cols()) throw ConfigError("estimate_spectral_radius: matrix must be square");
    return power_iteration(
        w.rows(), [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) { out.noalias() = w * v; },
        tol, max_iter);
}

EsnModel init_reservoir(const EsnHyperparameters& hp) {
    hp.validate();
    const int n = hp.n_reservoir;
    Rng rng = make_stream(hp.seed, StreamId::reservoir, 0);

    EsnModel model;
    model.hp = hp;

    // w entries row-major: zero with probability `sparsity`, else uniform.
    std::vector<Eigen::Triplet<double, std::int32_t>> triplets;
    triplets.reserve(static_cast<std::size_t>(
        (1.0 - hp.sparsity) * static_cast<double>(n) * static_cast<double>(n) * 1.1 + 64));
    for (std::int32_t i = 0; i < n; ++i)
        for (std::int32_t j = 0; j < n; ++j)
            if (rng.uniform01() >= hp.sparsity) triplets.emplace_back(i, j, rng.uniform_sym(1.0));
    model.w.resize(n, n);
    model.w.setFromTriplets(triplets.begin(), triplets.end());
    model.w.makeCompressed();

    const auto raw = estimate_spectral_radius(model.w);
    if (raw.value < 1e-12)
        throw NumericalError("init_reservoir: raw reservoir spectral radius is ~0, cannot rescale");
    model.w *= hp.spectral_radius / raw.value;

    model.w_in.resize(n, kNumModes);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < kNumModes; ++j) model.w_in(i, j) = rng.uniform_sym(hp.input_scale);

    model.bias.resize(n);
    for (int i = 0; i < n; ++i) model.bias[i] = rng.uniform_sym(hp.bias_scale);

    return model;
}

ReservoirRunner::ReservoirRunner(const EsnModel& model)
    : model_(&model),
      r_(Eigen::VectorXd::Zero(model.hp.n_reservoir)),
      scratch_(model.hp.n_reservoir) {}

void ReservoirRunner::step(const Amplitudes& input, Rng& noise, bool noise_on) {
    for (double v : input)
        if (!std::isfinite(v)) throw NumericalError("reservoir step: non-finite input");
    scratch_ = model_->bias;
    scratch_.noalias() += model_->w * r_;
    scratch_.noalias() += model_->w_in * Eigen::Map<const Eigen::Matrix<double, kNumModes, 1>>(input.data());
    r_ = scratch_.array().tanh();
    if (noise_on && model_->hp.noise_amplitude > 0.0) {
        const double xi = model_->hp.noise_amplitude;
        for (Eigen::Index i = 0; i < r_.size(); ++i) r_[i] += xi * noise.uniform_sym(0.5);
    }
}

Amplitudes ReservoirRunner::readout() const {
    const auto& w_out = model_->w_out;
    Amplitudes out;
    Eigen::Map<Eigen::Matrix<double, kNumModes, 1>> mapped(out.data());
    mapped.noalias() = w_out.leftCols(w_out.cols() - 1) * r_;
    mapped += w_out.col(w_out.cols() - 1);
    return out;
}

std::vector<ReservoirState> drive(const EsnModel& model, std::span<const Amplitudes> inputs,
                                  const ReservoirState& r0, Rng& noise, bool noise_on) {
    if (inputs.empty()) throw ConfigError("drive: empty input sequence");
    ReservoirRunner runner(model);
    if (r0.size() > 0) {
        if (r0.size() != model.hp.n_reservoir) throw ConfigError("drive: r0 has wrong dimension");
        runner.set_state(r0);
    }
    std::vector<ReservoirState> states;
    states.reserve(inputs.size());
    for (const auto& input : inputs) {
        runner.step(input, noise, noise_on);
        states.push_back(runner.state());
    }
    return states;
}

TrainingReport train_readout(EsnModel& model, const Trajectory& training, Rng& noise) {
    const Eigen::Index n_states = static_cast<Eigen::Index>(training.size());
    if (n_states < 2) throw ConfigError("train_readout: need at least two training states");
    if (std::abs(training.dt_sample - model.hp.dt_model) > 1e-9 * model.hp.dt_model)
        throw ConfigError("train_readout: training sampling interval differs from dt_model");

    const int n_r = model.hp.n_reservoir;
    const Eigen::Index n_t = n_states - 1;

    TrainingReport report;
    report.n_rows = n_t;
    report.short_training_set = n_states < n_r + 2;

    Eigen::MatrixXd design(n_t, n_r + 1);  // reservoir states plus all-ones column
    Eigen::MatrixXd targets(n_t, kNumModes);
    ReservoirRunner runner(model);
    for (Eigen::Index k = 0; k < n_t; ++k) {
        runner.step(training.states[static_cast<std::size_t>(k)], noise);
        design.row(k).head(n_r) = runner.state().transpose();
        design(k, n_r) = 1.0;
        targets.row(k) =
            Eigen::Map<const Eigen::Matrix<double, kNumModes, 1>>(training.states[static_cast<std::size_t>(k) + 1].data())
                .transpose();
    }
    report.target_ss = targets.squaredNorm();

    // Optional ridge as row augmentation keeps the solve orthogonal-factor based.
    Eigen::MatrixXd solution;
    const auto solve_with = [&](const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(lhs);
        const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
        const double tol_rank =
            diag.maxCoeff() * static_cast<double>(std::max(lhs.rows(), lhs.cols())) *
            std::numeric_limits<double>::epsilon();
        report.rank = (diag.array() > tol_rank).count();
        report.rank_deficient = report.rank < lhs.cols();
        if (report.rank_deficient) {
            // Rank-revealing fallback; reports the tighter rank estimate.
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(lhs);
            report.rank = cod.rank();
            solution = cod.solve(rhs);
        } else {
            solution = qr.solve(rhs);
        }
    };

    if (model.hp.ridge > 0.0) {
        const double mu = std::sqrt(model.hp.ridge);
        Eigen::MatrixXd lhs(n_t + n_r + 1, n_r + 1);
        lhs.topRows(n_t) = design;
        lhs.bottomRows(n_r + 1) = mu * Eigen::MatrixXd::Identity(n_r + 1, n_r + 1);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_t + n_r + 1, kNumModes);
        rhs.topRows(n_t) = targets;
        solve_with(lhs, rhs);
    } else {
        solve_with(design, targets);
    }

    model.w_out = solution.transpose();
    report.residual_ss = (design * solution - targets).squaredNorm();
    return report;
}

ReservoirState synchronize(const EsnModel& model, std::span<const Amplitudes> recent, Rng& noise,
                           bool noise_on) {
    if (!model.trained()) throw ConfigError("synchronize: model has no trained readout");
    if (recent.size() != static_cast<std::size_t>(model.hp.n_sync)) {
        std::ostringstream msg;
        msg << "synchronize: expected exactly " << model.hp.n_sync << " states, got "
            << recent.size();
        throw ConfigError(msg.str());
    }
    ReservoirRunner runner(model);
    for (std::size_t i = 0; i + 1 < recent.size(); ++i) runner.step(recent[i], noise, noise_on);
    return runner.state();
}

Trajectory predict(const EsnModel& model, const ReservoirState& r0, const Amplitudes& a0,
                   long horizon, Rng& noise, bool noise_on, double t0) {
    if (!model.trained()) throw ConfigError("predict: model has no trained readout");
    if (horizon < 0) throw ConfigError("predict: horizon must be >= 0");

    Trajectory out;
    out.t0 = t0;
    out.dt_sample = model.hp.dt_model;
    out.states.reserve(static_cast<std::size_t>(horizon) + 1);
    out.states.push_back(a0);

    ReservoirRunner runner(model);
    runner.set_state(r0);
    Amplitudes current = a0;
    for (long step = 1; step <= horizon; ++step) {
        runner.step(current, noise, noise_on);
        current = runner.readout();
        for (double v : current) {
            if (!std::isfinite(v) || std::abs(v) > 1.0e3) {
                std::ostringstream msg;
                msg << "predict: prediction diverged at step " << step << " (t = "
                    << t0 + static_cast<double>(step) * model.hp.dt_model << ")";
                throw NumericalError(msg.str());
            }
        }
        out.states.push_back(current);
    }
    return out;
}

}  // namespace mfesn
