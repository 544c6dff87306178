#include "linpaint/diffusion.hpp"

#include <cmath>

namespace linpaint {

namespace {

// splitmix64: decorrelates (seed, stream_id) pairs before seeding the engine.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

NoiseSource::NoiseSource(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(mix64(seed ^ mix64(stream_id))) {}

double NoiseSource::gaussian() { return normal_(engine_); }

Eigen::VectorXd NoiseSource::gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal_(engine_);
    return v;
}

Eigen::VectorXd forward_step(const Eigen::VectorXd& x_prev, double beta_t,
                             const Eigen::VectorXd& eps) {
    if (!(beta_t > 0.0 && beta_t < 1.0)) throw OutOfRange("beta outside (0,1)");
    if (eps.size() != x_prev.size()) throw ShapeMismatch("eps vs x_prev");
    return std::sqrt(1.0 - beta_t) * x_prev + std::sqrt(beta_t) * eps;
}

Eigen::VectorXd forward_marginal(const Eigen::VectorXd& x0, int t,
                                 const DiffusionSchedule& schedule,
                                 const Eigen::VectorXd& eps) {
    if (t < 0 || t > schedule.T)
        throw IndexOutOfRange("t = " + std::to_string(t) + " outside 0..T");
    if (eps.size() != x0.size()) throw ShapeMismatch("eps vs x0");
    const double ab = schedule.alpha_bars(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x0,
                               int t, const DiffusionSchedule& schedule) {
    if (t < 1 || t > schedule.T)
        throw IndexOutOfRange("t = " + std::to_string(t) + " outside 1..T");
    const double ab_t = schedule.alpha_bars(t);
    if (ab_t >= 1.0) throw DegenerateVariance("alpha_bar_t = 1");
    const double ab_prev = schedule.alpha_bars(t - 1);
    const double beta_t = schedule.betas(t);
    const double alpha_t = schedule.alphas(t);
    const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    const double ct = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
    return c0 * x0 + ct * x_t;
}

Eigen::VectorXd model_drift(const GeneratorModel& model, const Eigen::VectorXd& x_t, int t) {
    const int d = model.d();
    if (x_t.size() != d) throw ShapeMismatch("x_t has wrong dimension");
    if (model.is_multi_state()) {
        Eigen::VectorXd aug(d + 1);
        aug.head(d) = x_t;
        aug(d) = static_cast<double>(t);
        return model.theta * aug;
    }
    if (model.theta.cols() != d) throw ShapeMismatch("theta is neither d x d nor d x (d+1)");
    return model.theta * x_t;
}

Eigen::VectorXd reverse_step(const GeneratorModel& model, const Eigen::VectorXd& x_t,
                             int t, const AlignmentSchedule& alignment,
                             const Eigen::VectorXd& eps) {
    if (t < 1 || t > alignment.T)
        throw IndexOutOfRange("t = " + std::to_string(t) + " outside 1..T");
    if (eps.size() != x_t.size()) throw ShapeMismatch("eps vs x_t");
    const double beta_t = model.schedule.betas(t);
    return alignment.omegas(t) * model_drift(model, x_t, t) +
           alignment.xis(t) * std::sqrt(beta_t) * eps;
}

} // namespace linpaint
