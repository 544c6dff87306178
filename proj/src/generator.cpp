#include "linpaint/generator.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "linpaint/diffusion.hpp"

namespace linpaint {

GeneratorModel closed_form_two_state(const LinearManifold& manifold, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta outside (0,1)");
    GeneratorModel model;
    model.theta = std::sqrt(1.0 - beta) * manifold.projector();
    model.kind = ModelKind::exact_two_state;
    model.schedule = make_schedule(Eigen::VectorXd::Constant(1, beta));
    model.k = manifold.k;
    return model;
}

MultiStateCoefficients multi_state_coefficients(const DiffusionSchedule& schedule) {
    const int T = schedule.T;
    for (int t = 1; t <= T; ++t)
        if (schedule.alpha_bars(t) >= 1.0)
            throw DegenerateVariance("alpha_bar_" + std::to_string(t) + " = 1");

    // Exact averages over t ~ Uniform{1..T}.
    double e_inv = 0.0;      // E[1/(1-abar_t)]
    double e_ratio = 0.0;    // E[abar_t/(1-abar_t)]
    double e_drift = 0.0;    // E[sqrt(alpha_t)(1-abar_{t-1})]
    double e_pm = 0.0;       // E[abar_{t-1} sqrt(alpha_t)]
    double e_sqrt = 0.0;     // E[sqrt(alpha_t)]
    for (int t = 1; t <= T; ++t) {
        const double ab = schedule.alpha_bars(t);
        const double ab_prev = schedule.alpha_bars(t - 1);
        const double sa = std::sqrt(schedule.alphas(t));
        e_inv += 1.0 / (1.0 - ab);
        e_ratio += ab / (1.0 - ab);
        e_drift += sa * (1.0 - ab_prev);
        e_pm += ab_prev * sa;
        e_sqrt += sa;
    }
    e_inv /= T; e_ratio /= T; e_drift /= T; e_pm /= T; e_sqrt /= T;

    MultiStateCoefficients c;
    c.gamma = e_inv * e_drift;
    c.nu = e_inv * e_pm - e_ratio * e_sqrt;
    c.nu_bar = e_inv * e_pm - e_ratio * e_pm;
    return c;
}

GeneratorModel closed_form_multi_state(const LinearManifold& manifold,
                                       const DiffusionSchedule& schedule, bool iid_noise) {
    const MultiStateCoefficients c = multi_state_coefficients(schedule);
    const int d = manifold.d;
    GeneratorModel model;
    model.theta = Eigen::MatrixXd::Zero(d, d + 1);
    if (iid_noise) {
        model.theta.leftCols(d) = c.nu_bar * manifold.projector();
    } else {
        model.theta.leftCols(d) =
            c.nu * manifold.projector() + c.gamma * Eigen::MatrixXd::Identity(d, d);
    }
    model.kind = ModelKind::exact_multi_state;
    model.schedule = schedule;
    model.k = manifold.k;
    return model;
}

double linear_regression_loss(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& targets) {
    const double b = static_cast<double>(inputs.cols());
    return (targets - theta * inputs).squaredNorm() / b;
}

Eigen::MatrixXd linear_regression_grad(const Eigen::MatrixXd& theta,
                                       const Eigen::MatrixXd& inputs,
                                       const Eigen::MatrixXd& targets) {
    const double b = static_cast<double>(inputs.cols());
    return 2.0 / b * (theta * inputs - targets) * inputs.transpose();
}

namespace {

using SampleDraw = std::function<Eigen::VectorXd(NoiseSource&)>;

GeneratorModel train_impl(SampleDraw draw_x0, int d, int k,
                          const DiffusionSchedule& schedule, const TrainingConfig& config) {
    if (!(config.eta > 0.0)) throw OutOfRange("eta must be positive");
    if (config.iterations < 0) throw OutOfRange("iterations must be >= 0");
    const int T = schedule.T;
    const bool two_state = (T == 1);
    if (config.loss_kind == LossKind::noise_pred && !two_state)
        throw ScheduleMismatch("noise_pred training is two-state only");

    const int in_dim = two_state ? d : d + 1;
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(d, in_dim);
    NoiseSource noise(config.seed, 0);
    std::uniform_int_distribution<int> tdist(1, T);
    std::mt19937_64 tgen(config.seed ^ 0x7475726eULL);

    Eigen::MatrixXd inputs(in_dim, config.batch);
    Eigen::MatrixXd targets(d, config.batch);
    for (int it = 0; it < config.iterations; ++it) {
        for (int j = 0; j < config.batch; ++j) {
            const Eigen::VectorXd x0 = draw_x0(noise);
            const Eigen::VectorXd eps = noise.gaussian_vector(d);
            if (two_state) {
                const Eigen::VectorXd x1 = forward_marginal(x0, 1, schedule, eps);
                if (config.loss_kind == LossKind::noise_pred) {
                    inputs.col(j) = x1;
                    targets.col(j) = eps;
                } else {
                    inputs.col(j) = x1;
                    targets.col(j) = x0; // posterior mean at t = 1 is x0
                }
            } else {
                const int t = tdist(tgen);
                const Eigen::VectorXd xt = forward_marginal(x0, t, schedule, eps);
                inputs.col(j).head(d) = xt;
                inputs.col(j)(d) = static_cast<double>(t);
                targets.col(j) = posterior_mean(xt, x0, t, schedule);
            }
        }
        theta -= config.eta * linear_regression_grad(theta, inputs, targets);
        if (it % 256 == 0 && !(linear_regression_loss(theta, inputs, targets) <= 1e12))
            throw Diverged("loss exceeded 1e12 at iteration " + std::to_string(it));
    }

    GeneratorModel model;
    model.theta = (config.loss_kind == LossKind::noise_pred)
                      ? induced_posterior_theta(theta, schedule.betas(1))
                      : theta;
    model.kind = ModelKind::trained;
    model.schedule = schedule;
    model.k = k;
    return model;
}

} // namespace

GeneratorModel train_ddpm(const LinearManifold& manifold, const DiffusionSchedule& schedule,
                          const TrainingConfig& config) {
    const Eigen::MatrixXd a = manifold.a_matrix;
    const int k = manifold.k;
    return train_impl(
        [a, k](NoiseSource& noise) -> Eigen::VectorXd { return a * noise.gaussian_vector(k); },
        manifold.d, manifold.k, schedule, config);
}

GeneratorModel train_ddpm(const SampleBatch& data, const DiffusionSchedule& schedule,
                          const TrainingConfig& config) {
    if (data.n() < 1) throw ShapeMismatch("empty sample batch");
    const Eigen::MatrixXd samples = data.samples;
    const int n = data.n();
    auto pick = std::make_shared<std::mt19937_64>(config.seed ^ 0x64617461ULL);
    return train_impl(
        [samples, n, pick](NoiseSource&) -> Eigen::VectorXd {
            std::uniform_int_distribution<int> idx(0, n - 1);
            return samples.col(idx(*pick));
        },
        static_cast<int>(samples.rows()), static_cast<int>(data.latents.rows()), schedule,
        config);
}

GeneratorModel population_two_state_solve(const LinearManifold& manifold, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw OutOfRange("beta outside (0,1)");
    const int d = manifold.d;
    const Eigen::MatrixXd p = manifold.projector();
    // E[x1 x1^T] = (1-beta) P + beta I,  E[x0 x1^T] = sqrt(1-beta) P
    const Eigen::MatrixXd gram =
        (1.0 - beta) * p + beta * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd cross = std::sqrt(1.0 - beta) * p;
    GeneratorModel model;
    model.theta = gram.ldlt().solve(cross.transpose()).transpose();
    model.kind = ModelKind::trained;
    model.schedule = make_schedule(Eigen::VectorXd::Constant(1, beta));
    model.k = manifold.k;
    return model;
}

double population_loss_two_state(const Eigen::MatrixXd& theta,
                                 const LinearManifold& manifold, double beta) {
    const int d = manifold.d;
    const Eigen::MatrixXd p = manifold.projector();
    const Eigen::MatrixXd gram =
        (1.0 - beta) * p + beta * Eigen::MatrixXd::Identity(d, d);
    return p.trace() - 2.0 * std::sqrt(1.0 - beta) * (theta * p).trace() +
           (theta * gram * theta.transpose()).trace();
}

Eigen::MatrixXd induced_posterior_theta(const Eigen::MatrixXd& w, double beta) {
    const int d = static_cast<int>(w.rows());
    // mu(x) = (x - sqrt(beta) W x) / sqrt(1-beta)  since abar_1 = 1-beta
    return (Eigen::MatrixXd::Identity(d, d) - std::sqrt(beta) * w) / std::sqrt(1.0 - beta);
}

PerturbedModel perturb_generator(const GeneratorModel& exact, const Eigen::MatrixXd& delta,
                                 const LinearManifold& manifold, const InpaintMask& mask) {
    if (exact.is_multi_state() || exact.kind != ModelKind::exact_two_state)
        throw ShapeMismatch("perturbation applies to exact two-state models");
    const int d = exact.d();
    if (delta.rows() != d || delta.cols() != d) throw ShapeMismatch("delta must be d x d");
    const double beta = exact.schedule.betas(1);

    Eigen::MatrixXd perturbed_map = manifold.projector() + delta; // A A^T + delta
    for (int j = 0; j < d; ++j)
        if (mask.m(j) == 0.0) perturbed_map.col(j).setZero();
    const double lambda_hat = spectral_norm(perturbed_map);
    if (lambda_hat >= 1.0)
        throw AssumptionViolated("lambda_hat_max = " + std::to_string(lambda_hat) + " >= 1");

    PerturbedModel out;
    out.model = exact;
    out.model.theta = exact.theta + std::sqrt(1.0 - beta) * delta;
    out.model.kind = ModelKind::perturbed;
    out.lambda_hat_max = lambda_hat;
    return out;
}

void save_generator(const GeneratorModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << to_string(model.kind) << " " << model.d() << " " << model.k << " "
        << model.schedule.T << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < model.theta.rows(); ++i) {
        for (Eigen::Index j = 0; j < model.theta.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", model.theta(i, j));
            out << buf << (j + 1 < model.theta.cols() ? " " : "\n");
        }
    }
}

GeneratorModel load_generator(const std::string& path, const Eigen::VectorXd& betas) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::string kind_str;
    int d = 0, k = 0, T = 0;
    if (!(in >> kind_str >> d >> k >> T)) throw ConfigError("bad generator header");
    if (static_cast<int>(betas.size()) != T)
        throw ScheduleMismatch("file declares T = " + std::to_string(T) + ", got " +
                               std::to_string(betas.size()) + " betas");
    GeneratorModel model;
    model.kind = model_kind_from_string(kind_str);
    model.k = k;
    model.schedule = make_schedule(betas);
    const int cols = (model.kind == ModelKind::exact_multi_state || T > 1) ? d + 1 : d;
    model.theta.resize(d, cols);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < cols; ++j)
            if (!(in >> model.theta(i, j))) throw ConfigError("truncated generator matrix");
    return model;
}

} // namespace linpaint
