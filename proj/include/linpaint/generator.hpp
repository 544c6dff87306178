#pragma once

#include <Eigen/Dense>
#include <string>

#include "linpaint/core.hpp"

namespace linpaint {

// Schedule-dependent scalars of the multi-state closed form, each a product of
// exact finite averages over t uniform on {1..T}.
struct MultiStateCoefficients {
    double nu = 0.0;
    double gamma = 0.0;
    double nu_bar = 0.0;
};

enum class LossKind { posterior_mean, noise_pred };

struct TrainingConfig {
    LossKind loss_kind = LossKind::posterior_mean;
    double eta = 0.05;
    int iterations = 20000;
    int batch = 64;
    std::uint64_t seed = 0;
};

// theta* = sqrt(1-beta) A A^T
GeneratorModel closed_form_two_state(const LinearManifold& manifold, double beta);

MultiStateCoefficients multi_state_coefficients(const DiffusionSchedule& schedule);

// iid_noise = false: theta* = [nu A A^T + gamma I, 0]
// iid_noise = true:  theta* = [nu_bar A A^T, 0]   (independent per-round noises)
GeneratorModel closed_form_multi_state(const LinearManifold& manifold,
                                       const DiffusionSchedule& schedule, bool iid_noise);

// Mean squared residual ||targets - theta * inputs||^2 over batch columns, and
// its analytic gradient. Both training losses are instances of this.
double linear_regression_loss(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& targets);
Eigen::MatrixXd linear_regression_grad(const Eigen::MatrixXd& theta,
                                       const Eigen::MatrixXd& inputs,
                                       const Eigen::MatrixXd& targets);

// Stochastic gradient descent from a zero initialization; x0 drawn fresh from
// the manifold each step. Two-state (T = 1) fits theta * x1 to the posterior
// mean x0; multi-state fits theta * [x_t; t] to the analytic posterior mean.
// noise_pred fits a linear noise predictor W and returns the induced
// posterior-mean map (two-state only).
GeneratorModel train_ddpm(const LinearManifold& manifold, const DiffusionSchedule& schedule,
                          const TrainingConfig& config);

// Same loop, but x0 columns are drawn uniformly from a fixed sample set.
GeneratorModel train_ddpm(const SampleBatch& data, const DiffusionSchedule& schedule,
                          const TrainingConfig& config);

// Deterministic solve of the population objective's normal equations
// (two-state): theta E[x1 x1^T] = E[x0 x1^T].
GeneratorModel population_two_state_solve(const LinearManifold& manifold, double beta);

// Closed-form population loss of the two-state linear model.
double population_loss_two_state(const Eigen::MatrixXd& theta,
                                 const LinearManifold& manifold, double beta);

// Posterior-mean map induced by a linear noise predictor eps(x) = W x at t = 1.
Eigen::MatrixXd induced_posterior_theta(const Eigen::MatrixXd& w, double beta);

struct PerturbedModel {
    GeneratorModel model;
    double lambda_hat_max = 0.0;
};

// theta_hat = theta* + delta sqrt(1-beta); rejects when
// ||(A A^T + delta) D(m)|| >= 1.
PerturbedModel perturb_generator(const GeneratorModel& exact, const Eigen::MatrixXd& delta,
                                 const LinearManifold& manifold, const InpaintMask& mask);

// Flat text format: header "kind d k T", then row-major entries, 17 significant
// digits. The variance schedule travels separately (betas at load time).
void save_generator(const GeneratorModel& model, const std::string& path);
GeneratorModel load_generator(const std::string& path, const Eigen::VectorXd& betas);

} // namespace linpaint
