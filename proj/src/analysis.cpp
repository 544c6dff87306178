#include "linpaint/analysis.hpp"

#include <cmath>
#include <limits>

namespace linpaint {

int resampling_budget(double epsilon, double lambda_max, double theta_norm,
                      double init_distance, double beta) {
    if (!(lambda_max > 0.0 && lambda_max < 1.0))
        throw InvalidRate("lambda_max must lie in (0,1)");
    if (!(epsilon > 0.0)) throw OutOfRange("epsilon must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw OutOfRange("beta outside [0,1)");
    const double arg = theta_norm * init_distance / (epsilon * std::sqrt(1.0 - beta));
    if (arg <= 1.0) return 1;
    const double r = std::ceil(std::log(arg) / std::log(1.0 / lambda_max));
    return std::max(1, static_cast<int>(r));
}

double noisy_error_ceiling(double theta_gap, double x0_norm, double lambda_hat_max,
                           double beta) {
    if (!(lambda_hat_max < 1.0)) throw InvalidRate("lambda_hat_max must be < 1");
    if (!(beta >= 0.0 && beta < 1.0)) throw OutOfRange("beta outside [0,1)");
    return theta_gap * x0_norm / ((1.0 - lambda_hat_max) * std::sqrt(1.0 - beta));
}

double admissible_delta(double epsilon, double lambda_hat_max, double kappa) {
    if (!(lambda_hat_max < 1.0)) throw InvalidRate("lambda_hat_max must be < 1");
    if (!(kappa > 0.0)) throw OutOfRange("kappa must be positive");
    return epsilon * (1.0 - lambda_hat_max) / kappa;
}

Eigen::VectorXd fixed_point_solve(const Eigen::MatrixXd& contraction,
                                  const Eigen::VectorXd& forcing) {
    if (spectral_norm(contraction) >= 1.0)
        throw NotContractive("||M|| >= 1");
    const Eigen::Index d = contraction.rows();
    return (Eigen::MatrixXd::Identity(d, d) - contraction)
        .partialPivLu()
        .solve(forcing);
}

Eigen::VectorXd fixed_point_iterate(const Eigen::MatrixXd& contraction,
                                    const Eigen::VectorXd& forcing, int iterations) {
    if (spectral_norm(contraction) >= 1.0)
        throw NotContractive("||M|| >= 1");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(forcing.size());
    for (int i = 0; i < iterations; ++i) x = contraction * x + forcing;
    return x;
}

Eigen::VectorXd fixed_point_oracle(const Eigen::MatrixXd& contraction,
                                   const Eigen::VectorXd& forcing) {
    const Eigen::VectorXd direct = fixed_point_solve(contraction, forcing);
    const Eigen::VectorXd iterated = fixed_point_iterate(contraction, forcing);
    if ((direct - iterated).norm() > 1e-10)
        throw NotContractive("solve and iterate modes disagree beyond 1e-10");
    return direct;
}

RateFit fit_rate(const std::vector<double>& errors) {
    if (errors.size() < 3) throw TooFewPoints("need at least 3 error values");
    for (double e : errors)
        if (!(e > 0.0)) throw NonPositiveError("errors must be strictly positive");
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() * errors[0];
    std::vector<double> logs;
    for (double e : errors) {
        if (e < floor) break; // rounding noise dominates from here on
        logs.push_back(std::log(e));
    }
    if (logs.size() < 3) throw TooFewPoints("fewer than 3 values above the precision floor");

    const int n = static_cast<int>(logs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        sx += i; sy += logs[i];
        sxx += double(i) * i; sxy += i * logs[i]; syy += logs[i] * logs[i];
    }
    const double denom = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / denom;
    const double ss_tot = syy - sy * sy / n;
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0;
    for (int i = 0; i < n; ++i) {
        const double r = logs[i] - (intercept + slope * i);
        ss_res += r * r;
    }
    RateFit fit;
    fit.fitted_rate = std::exp(slope);
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.rounds_used = n;
    return fit;
}

double manifold_residual(const Eigen::VectorXd& x, const LinearManifold& manifold) {
    if (x.size() != manifold.d) throw ShapeMismatch("x vs manifold dimension");
    return (x - manifold.a_matrix * (manifold.a_matrix.transpose() * x)).norm();
}

MomentReport latent_moment_test(const SampleBatch& samples, const LinearManifold& manifold) {
    const int n = samples.n();
    if (n < 100) throw TooFewPoints("need n >= 100 samples");
    if (samples.samples.rows() != manifold.d) throw ShapeMismatch("samples vs manifold");
    for (int i = 0; i < n; ++i)
        if (manifold_residual(samples.samples.col(i), manifold) > 1e-8)
            throw OffManifold("sample " + std::to_string(i) + " leaves span(A)");

    const Eigen::MatrixXd z = manifold.a_matrix.transpose() * samples.samples; // k x n
    const int k = manifold.k;
    const Eigen::VectorXd mean = z.rowwise().mean();
    const Eigen::MatrixXd centered = z.colwise() - mean;
    const Eigen::MatrixXd cov = centered * centered.transpose() / double(n - 1);

    MomentReport report;
    report.mean_norm = mean.norm();
    report.cov_gap = (cov - Eigen::MatrixXd::Identity(k, k)).norm();
    report.mean_threshold = 4.0 / std::sqrt(double(n));
    report.cov_threshold = 8.0 * k / std::sqrt(double(n));
    report.mean_pass = report.mean_norm <= report.mean_threshold;
    report.cov_pass = report.cov_gap <= report.cov_threshold;
    return report;
}

} // namespace linpaint
