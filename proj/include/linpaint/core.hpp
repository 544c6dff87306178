#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "linpaint/errors.hpp"

namespace linpaint {

// Data-generating matrix A (d x k) with orthonormal columns; data is x0 = A z0.
struct LinearManifold {
    Eigen::MatrixXd a_matrix; // d x k, A^T A = I_k
    int d = 0;
    int k = 0;

    // Orthogonal projector A A^T onto the column span.
    Eigen::MatrixXd projector() const { return a_matrix * a_matrix.transpose(); }
};

// Binary mask, 1 = coordinate missing, 0 = known.
struct InpaintMask {
    Eigen::VectorXd m; // entries in {0,1}
    int d = 0;

    // m .* x  (the action of D(m))
    Eigen::VectorXd masked(const Eigen::VectorXd& x) const { return m.cwiseProduct(x); }
    // (1-m) .* x  (the action of D(1-m))
    Eigen::VectorXd known(const Eigen::VectorXd& x) const {
        return (Eigen::VectorXd::Ones(d) - m).cwiseProduct(x);
    }
};

// Variance schedule. Index 0 is the artificial beta_0 = 0 entry so that
// alpha_bars[0] = 1; real steps are t = 1..T.
struct DiffusionSchedule {
    Eigen::VectorXd betas;      // length T+1, betas[0] = 0
    Eigen::VectorXd alphas;     // alphas[t] = 1 - betas[t]
    Eigen::VectorXd alpha_bars; // running products, alpha_bars[0] = 1
    int T = 0;
};

// Drift/dispersion coefficients for aligned reverse steps.
// Index convention matches DiffusionSchedule: entries 1..T, [0] unused.
struct AlignmentSchedule {
    Eigen::VectorXd omegas;
    Eigen::VectorXd xis;
    int T = 0;
};

enum class ModelKind { exact_two_state, exact_multi_state, trained, perturbed };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Reverse-kernel matrix theta: d x d (two-state) or d x (d+1) (multi-state,
// last column multiplies the time input).
struct GeneratorModel {
    Eigen::MatrixXd theta;
    ModelKind kind = ModelKind::exact_two_state;
    DiffusionSchedule schedule;
    int k = 0; // intrinsic dimension of the source manifold when known, else 0

    int d() const { return static_cast<int>(theta.rows()); }
    bool is_multi_state() const { return theta.cols() == theta.rows() + 1; }
};

struct SampleBatch {
    Eigen::MatrixXd samples; // d x n
    Eigen::MatrixXd latents; // k x n, 0 rows when unknown
    std::uint64_t seed = 0;

    int n() const { return static_cast<int>(samples.cols()); }
};

// Orthonormalizes raw (Householder QR); throws RankDeficient when the smallest
// singular value is below 1e-10 times the largest.
LinearManifold make_manifold(const Eigen::MatrixXd& raw);

// Builds a mask from 0/1 entries; throws InvalidMask on non-binary entries.
InpaintMask make_mask(const Eigen::VectorXd& bits);

// Returns lambda_max = ||A A^T D(m)||; does not throw on invalid masks
// (callers decide), see mask_is_valid.
double validate_mask(const InpaintMask& mask, const LinearManifold& manifold);

inline bool mask_is_valid(double lambda_max) { return lambda_max < 1.0 - 1e-12; }

// Runs the alpha-bar product; throws OutOfRange when any beta is outside (0,1).
DiffusionSchedule make_schedule(const Eigen::VectorXd& betas);

// Spectral norm, full SVD for d <= 64 and power iteration above.
double spectral_norm(const Eigen::MatrixXd& mat);

// Aligned coefficients that make the multi-state reverse chain sample the data
// distribution exactly: omega_t = 1/(nu_bar * 2^{1/(2T)}),
// xi_t = sqrt(2^{(t-1)/T} / (2 beta_t (T-1))). Requires T >= 2.
AlignmentSchedule make_sampling_alignment(const DiffusionSchedule& schedule, double nu_bar);

// Coefficients for resampling-based inpainting: omega_t = 1/nu_bar for every t
// (undoes the drift shrink so pasted coordinates harmonize at the right scale),
// dispersion as in make_sampling_alignment. For T = 1 this is the two-state
// special case omega_1 = 1/sqrt(1-beta).
AlignmentSchedule make_inpainting_alignment(const DiffusionSchedule& schedule, double nu_bar);

// Identity coefficients (omega = xi = 1): the unaligned RePaint reverse step.
AlignmentSchedule make_unit_alignment(int T);

} // namespace linpaint
