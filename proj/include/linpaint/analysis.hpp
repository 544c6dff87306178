#pragma once

#include <Eigen/Dense>

#include "linpaint/core.hpp"

namespace linpaint {

struct RateFit {
    double fitted_rate = 0.0; // per-round geometric factor
    double r_squared = 0.0;
    int rounds_used = 0;
};

struct BoundReport {
    double lambda_max = 0.0;
    double lambda_hat_max = 0.0;
    int r_required = 0;
    double error_ceiling = 0.0; // zeta
    double admissible_delta = 0.0;
};

struct MomentReport {
    double mean_norm = 0.0;       // ||mean(z_hat)||
    double cov_gap = 0.0;         // ||cov(z_hat) - I||_F
    double mean_threshold = 0.0;  // 4 / sqrt(n)
    double cov_threshold = 0.0;   // 8 k / sqrt(n)
    bool mean_pass = false;
    bool cov_pass = false;
    bool pass() const { return mean_pass && cov_pass; }
};

// ceil(log(theta_norm * init_distance / (eps sqrt(1-beta))) / log(1/lambda)),
// clamped below at 1.
int resampling_budget(double epsilon, double lambda_max, double theta_norm,
                      double init_distance, double beta);

// zeta = theta_gap * x0_norm / ((1 - lambda_hat) sqrt(1-beta)); the sup form
// uses x0_norm = kappa.
double noisy_error_ceiling(double theta_gap, double x0_norm, double lambda_hat_max,
                           double beta);

// Largest perturbation norm that keeps the limiting error within epsilon
// (unit constant): eps (1 - lambda_hat) / kappa.
double admissible_delta(double epsilon, double lambda_hat_max, double kappa);

// Solves (I - M) x = forcing directly and by 10000 plain iterations, throwing
// unless the two agree within 1e-10. Requires ||M|| < 1.
Eigen::VectorXd fixed_point_oracle(const Eigen::MatrixXd& contraction,
                                   const Eigen::VectorXd& forcing);
Eigen::VectorXd fixed_point_solve(const Eigen::MatrixXd& contraction,
                                  const Eigen::VectorXd& forcing);
Eigen::VectorXd fixed_point_iterate(const Eigen::MatrixXd& contraction,
                                    const Eigen::VectorXd& forcing, int iterations = 10000);

// Least-squares slope of log(error) vs round; entries below
// 100 * machine-epsilon * errors[0] are dropped before fitting.
RateFit fit_rate(const std::vector<double>& errors);

// ||(I - A A^T) x||
double manifold_residual(const Eigen::VectorXd& x, const LinearManifold& manifold);

// Recovers z_hat = A^T x per sample and tests first and second latent moments
// against N(0, I_k) at 4/sqrt(n) and 8k/sqrt(n).
MomentReport latent_moment_test(const SampleBatch& samples, const LinearManifold& manifold);

} // namespace linpaint
