#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

#include "linpaint/core.hpp"

namespace linpaint {

// Deterministic Gaussian stream: identical (seed, stream_id, draw index)
// always yields identical values. One instance per sample keeps data-parallel
// runs independent of scheduling order.
class NoiseSource {
public:
    NoiseSource(std::uint64_t seed, std::uint64_t stream_id);

    double gaussian();
    Eigen::VectorXd gaussian_vector(int n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) eps
Eigen::VectorXd forward_step(const Eigen::VectorXd& x_prev, double beta_t,
                             const Eigen::VectorXd& eps);

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps  (closed-form marginal; t = 0 is
// the identity edge case)
Eigen::VectorXd forward_marginal(const Eigen::VectorXd& x0, int t,
                                 const DiffusionSchedule& schedule,
                                 const Eigen::VectorXd& eps);

// Analytic mean of q(x_{t-1} | x_t, x0).
Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x0,
                               int t, const DiffusionSchedule& schedule);

// Drift of the linear reverse model: theta * x (two-state) or theta * [x; t]
// (multi-state, time appended).
Eigen::VectorXd model_drift(const GeneratorModel& model, const Eigen::VectorXd& x_t, int t);

// omega_t * drift + xi_t * sqrt(beta_t) * eps. Callers pass eps = 0 at t = 1
// (the final step is noiseless).
Eigen::VectorXd reverse_step(const GeneratorModel& model, const Eigen::VectorXd& x_t,
                             int t, const AlignmentSchedule& alignment,
                             const Eigen::VectorXd& eps);

} // namespace linpaint
