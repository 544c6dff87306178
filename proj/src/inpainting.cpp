#include "linpaint/inpainting.hpp"

#include <cmath>

namespace linpaint {

std::string to_string(InpaintMethod method) {
    switch (method) {
    case InpaintMethod::repaint: return "repaint";
    case InpaintMethod::repaint_plus_special: return "repaint_plus_special";
    case InpaintMethod::repaint_plus_general: return "repaint_plus_general";
    case InpaintMethod::slow_diffusion: return "slow_diffusion";
    case InpaintMethod::repaint_then_reverse: return "repaint_then_reverse";
    }
    return "unknown";
}

namespace {

void check_two_state(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                     const GeneratorModel& model, const Eigen::VectorXd& x1_init) {
    const int d = model.d();
    if (model.is_multi_state() || model.schedule.T != 1)
        throw ShapeMismatch("two-state routine needs a two-state model");
    if (mask.d != d || x0_known.size() != d || x1_init.size() != d)
        throw ShapeMismatch("dimension mismatch against model");
    // lambda of the model's aligned drift (A A^T for exact models, A A^T +
    // delta for perturbed ones) restricted to the masked columns.
    const double beta = model.schedule.betas(1);
    Eigen::MatrixXd drift_map = model.theta / std::sqrt(1.0 - beta);
    for (int j = 0; j < d; ++j)
        if (mask.m(j) == 0.0) drift_map.col(j).setZero();
    const double lam = spectral_norm(drift_map);
    if (!mask_is_valid(lam))
        throw InvalidMask("lambda_max = " + std::to_string(lam) + " >= 1");
}

// Shared two-state loop: initial drift, then R rounds of paste + drift.
InpaintRun two_state_loop(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                          const GeneratorModel& model, int R, const Eigen::VectorXd& x1_init,
                          bool record, double omega, InpaintMethod method) {
    check_two_state(x0_known, mask, model, x1_init);
    InpaintRun run;
    run.method = method;
    run.R = R;
    Eigen::VectorXd x = omega * (model.theta * x1_init);
    for (int r = 0; r < R; ++r) {
        x = omega * (model.theta * (mask.masked(x) + mask.known(x0_known)));
        if (record) run.trajectory.push_back(x);
    }
    run.output = x;
    return run;
}

} // namespace

InpaintRun repaint_plus_two_state(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                  const GeneratorModel& model, int R,
                                  const Eigen::VectorXd& x1_init, bool record) {
    const double omega = 1.0 / std::sqrt(1.0 - model.schedule.betas(1));
    return two_state_loop(x0_known, mask, model, R, x1_init, record, omega,
                          InpaintMethod::repaint_plus_special);
}

InpaintRun repaint_two_state(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                             const GeneratorModel& model, int R,
                             const Eigen::VectorXd& x1_init, bool record) {
    InpaintRun run = two_state_loop(x0_known, mask, model, R, x1_init, record, 1.0,
                                    InpaintMethod::repaint);
    run.output = mask.masked(run.output) + mask.known(x0_known);
    return run;
}

InpaintRun repaint_then_reverse(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                const GeneratorModel& model, int R,
                                const Eigen::VectorXd& x1_init) {
    InpaintRun run = repaint_two_state(x0_known, mask, model, R, x1_init, false);
    run.method = InpaintMethod::repaint_then_reverse;
    run.output = model.theta * run.output;
    return run;
}

namespace {

void check_general(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                   const GeneratorModel& model, const DiffusionSchedule& schedule,
                   const AlignmentSchedule& alignment) {
    const int d = model.d();
    if (mask.d != d || x0_known.size() != d) throw ShapeMismatch("dimension mismatch");
    if (schedule.T != model.schedule.T || alignment.T != schedule.T)
        throw ScheduleMismatch("model, schedule and alignment disagree on T");
    if ((schedule.betas - model.schedule.betas).cwiseAbs().maxCoeff() != 0.0)
        throw ScheduleMismatch("model and schedule disagree on betas");
}

} // namespace

InpaintRun repaint_plus_general(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                const GeneratorModel& model, const DiffusionSchedule& schedule,
                                const AlignmentSchedule& alignment, int R, NoiseSource& noise,
                                bool record, const std::optional<Eigen::VectorXd>& x_init) {
    check_general(x0_known, mask, model, schedule, alignment);
    const int d = model.d();
    const int T = schedule.T;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);

    InpaintRun run;
    run.method = InpaintMethod::repaint_plus_general;
    run.R = R;
    Eigen::VectorXd x = x_init ? *x_init : noise.gaussian_vector(d);
    for (int t = T; t >= 1; --t) {
        for (int r = 1; r <= R; ++r) {
            // Fresh independent noises each round (forward, reverse, push), all
            // zero at t = 1.
            const Eigen::VectorXd fwd_eps = (t > 1) ? noise.gaussian_vector(d) : zero;
            const Eigen::VectorXd rev_eps = (t > 1) ? noise.gaussian_vector(d) : zero;
            const Eigen::VectorXd known =
                forward_marginal(x0_known, t - 1, schedule, fwd_eps);
            Eigen::VectorXd x_prev = reverse_step(model, x, t, alignment, rev_eps);
            x_prev = mask.masked(x_prev) + mask.known(known);
            if (record && t == 1) run.trajectory.push_back(x_prev);
            if (r < R && t > 1)
                x = forward_step(x_prev, schedule.betas(t), noise.gaussian_vector(d));
            else
                x = x_prev;
        }
    }
    run.output = alignment.omegas(1) * model_drift(model, x, 1);
    return run;
}

InpaintRun slow_diffusion_inpaint(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                  const GeneratorModel& model, const DiffusionSchedule& schedule,
                                  const AlignmentSchedule& alignment, NoiseSource& noise,
                                  bool record, const std::optional<Eigen::VectorXd>& x_init,
                                  bool zero_noise) {
    check_general(x0_known, mask, model, schedule, alignment);
    if (schedule.T < 2) throw ScheduleMismatch("slow diffusion requires T >= 2");
    const int d = model.d();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);

    InpaintRun run;
    run.method = InpaintMethod::slow_diffusion;
    run.R = 1;
    Eigen::VectorXd x = x_init ? *x_init : (zero_noise ? zero : noise.gaussian_vector(d));
    for (int t = schedule.T; t >= 1; --t) {
        const Eigen::VectorXd rev_eps =
            (t > 1 && !zero_noise) ? noise.gaussian_vector(d) : zero;
        x = reverse_step(model, x, t, alignment, rev_eps);
        if (t > 1) {
            const Eigen::VectorXd fwd_eps = zero_noise ? zero : noise.gaussian_vector(d);
            const Eigen::VectorXd known =
                forward_marginal(x0_known, t - 1, schedule, fwd_eps);
            x = mask.masked(x) + mask.known(known);
        }
        if (record) run.trajectory.push_back(x);
    }
    run.output = x;
    return run;
}

} // namespace linpaint
