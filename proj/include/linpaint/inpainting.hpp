#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "linpaint/core.hpp"
#include "linpaint/diffusion.hpp"

namespace linpaint {

enum class InpaintMethod {
    repaint,
    repaint_plus_special,
    repaint_plus_general,
    slow_diffusion,
    repaint_then_reverse,
};

std::string to_string(InpaintMethod method);

struct InpaintRun {
    InpaintMethod method = InpaintMethod::repaint_plus_special;
    int R = 0;
    std::vector<Eigen::VectorXd> trajectory; // per-round iterates when recording
    Eigen::VectorXd output;
};

// Corrected two-state resampling: drift, then R rounds of paste + aligned
// drift (omega = 1/sqrt(1-beta)). Output is the final drift iterate (lies in
// span(A)). R = 0 degenerates to a single drift of x1_init. Mask validity is
// checked against the model's own aligned drift map theta/sqrt(1-beta).
InpaintRun repaint_plus_two_state(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                  const GeneratorModel& model, int R,
                                  const Eigen::VectorXd& x1_init, bool record = false);

// Biased baseline: same loop with omega = 1 (raw drift theta x). Output is the
// final drift iterate with the known coordinates pasted back.
InpaintRun repaint_two_state(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                             const GeneratorModel& model, int R,
                             const Eigen::VectorXd& x1_init, bool record = false);

// repaint_two_state followed by one extra unaligned reverse drift.
InpaintRun repaint_then_reverse(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                const GeneratorModel& model, int R,
                                const Eigen::VectorXd& x1_init);

// Multi-state resampling: for t = T..1, R rounds of (synthesize known part at
// level t-1, aligned reverse step, paste, push forward with fresh noise unless
// r = R or t = 1), then a final aligned noiseless drift. Noises are zero at
// t = 1. With T = 1 this reduces exactly to repaint_plus_two_state.
// x_init overrides the N(0, I) draw of the top state when provided.
InpaintRun repaint_plus_general(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                const GeneratorModel& model, const DiffusionSchedule& schedule,
                                const AlignmentSchedule& alignment, int R, NoiseSource& noise,
                                bool record = false,
                                const std::optional<Eigen::VectorXd>& x_init = std::nullopt);

// Single pass t = T..1 pasting at the intermediate states only (no resampling,
// no extra final drift); retains a persistent bias. zero_noise forces every
// epsilon to 0 for deterministic-part checks.
InpaintRun slow_diffusion_inpaint(const Eigen::VectorXd& x0_known, const InpaintMask& mask,
                                  const GeneratorModel& model, const DiffusionSchedule& schedule,
                                  const AlignmentSchedule& alignment, NoiseSource& noise,
                                  bool record = false,
                                  const std::optional<Eigen::VectorXd>& x_init = std::nullopt,
                                  bool zero_noise = false);

} // namespace linpaint
