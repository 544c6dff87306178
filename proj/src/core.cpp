#include "linpaint/core.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

namespace linpaint {

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::exact_two_state: return "exact_two_state";
    case ModelKind::exact_multi_state: return "exact_multi_state";
    case ModelKind::trained: return "trained";
    case ModelKind::perturbed: return "perturbed";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "exact_two_state") return ModelKind::exact_two_state;
    if (s == "exact_multi_state") return ModelKind::exact_multi_state;
    if (s == "trained") return ModelKind::trained;
    if (s == "perturbed") return ModelKind::perturbed;
    throw OutOfRange("unknown model kind '" + s + "'");
}

LinearManifold make_manifold(const Eigen::MatrixXd& raw) {
    const int d = static_cast<int>(raw.rows());
    const int k = static_cast<int>(raw.cols());
    if (k < 1 || k > d) throw RankDeficient("need 1 <= k <= d, got d=" + std::to_string(d) + " k=" + std::to_string(k));

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(raw);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(k - 1);
    if (smax <= 0.0 || smin < 1e-10 * smax)
        throw RankDeficient("numerical rank below " + std::to_string(k));

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    // Fix the column signs so Q depends only on span direction conventions
    // (diag(R) > 0), keeping construction reproducible.
    Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (int j = 0; j < k; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);

    LinearManifold out;
    out.a_matrix = q;
    out.d = d;
    out.k = k;
    return out;
}

InpaintMask make_mask(const Eigen::VectorXd& bits) {
    for (int i = 0; i < bits.size(); ++i)
        if (bits(i) != 0.0 && bits(i) != 1.0)
            throw InvalidMask("mask entries must be 0 or 1");
    InpaintMask out;
    out.m = bits;
    out.d = static_cast<int>(bits.size());
    return out;
}

double spectral_norm(const Eigen::MatrixXd& mat) {
    if (mat.rows() <= 64 && mat.cols() <= 64) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
        return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    }
    // Power iteration on mat^T mat, tol 1e-12, at most 10000 sweeps.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(mat.cols()).normalized();
    double sigma = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Eigen::VectorXd w = mat.transpose() * (mat * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        const double next = std::sqrt(norm);
        if (std::abs(next - sigma) <= 1e-12 * std::max(1.0, next)) return next;
        sigma = next;
    }
    return sigma;
}

double validate_mask(const InpaintMask& mask, const LinearManifold& manifold) {
    if (mask.d != manifold.d)
        throw DimensionMismatch("mask length " + std::to_string(mask.d) +
                                " vs ambient dimension " + std::to_string(manifold.d));
    // A A^T D(m) just zeroes the unmasked columns of the projector.
    Eigen::MatrixXd pm = manifold.projector();
    for (int j = 0; j < mask.d; ++j)
        if (mask.m(j) == 0.0) pm.col(j).setZero();
    return spectral_norm(pm);
}

DiffusionSchedule make_schedule(const Eigen::VectorXd& betas) {
    const int T = static_cast<int>(betas.size());
    if (T < 1) throw OutOfRange("schedule needs at least one step");
    DiffusionSchedule s;
    s.T = T;
    s.betas.resize(T + 1);
    s.alphas.resize(T + 1);
    s.alpha_bars.resize(T + 1);
    s.betas(0) = 0.0;
    s.alphas(0) = 1.0;
    s.alpha_bars(0) = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double b = betas(t - 1);
        if (!(b > 0.0 && b < 1.0))
            throw OutOfRange("beta_" + std::to_string(t) + " = " + std::to_string(b) +
                             " outside (0,1)");
        s.betas(t) = b;
        s.alphas(t) = 1.0 - b;
        s.alpha_bars(t) = s.alpha_bars(t - 1) * s.alphas(t);
    }
    return s;
}

namespace {

Eigen::VectorXd dispersion_xis(const DiffusionSchedule& schedule) {
    const int T = schedule.T;
    Eigen::VectorXd xis = Eigen::VectorXd::Zero(T + 1);
    for (int t = 2; t <= T; ++t)
        xis(t) = std::sqrt(std::pow(2.0, double(t - 1) / T) /
                           (2.0 * schedule.betas(t) * (T - 1)));
    return xis;
}

} // namespace

AlignmentSchedule make_sampling_alignment(const DiffusionSchedule& schedule, double nu_bar) {
    if (schedule.T < 2) throw ScheduleMismatch("sampling alignment requires T >= 2");
    if (nu_bar <= 0.0) throw OutOfRange("nu_bar must be positive");
    AlignmentSchedule a;
    a.T = schedule.T;
    a.omegas = Eigen::VectorXd::Constant(schedule.T + 1,
                                         1.0 / (nu_bar * std::pow(2.0, 1.0 / (2.0 * schedule.T))));
    a.omegas(0) = 0.0;
    a.xis = dispersion_xis(schedule);
    return a;
}

AlignmentSchedule make_inpainting_alignment(const DiffusionSchedule& schedule, double nu_bar) {
    if (nu_bar <= 0.0) throw OutOfRange("nu_bar must be positive");
    AlignmentSchedule a;
    a.T = schedule.T;
    a.omegas = Eigen::VectorXd::Constant(schedule.T + 1, 1.0 / nu_bar);
    a.omegas(0) = 0.0;
    a.xis = dispersion_xis(schedule);
    return a;
}

AlignmentSchedule make_unit_alignment(int T) {
    AlignmentSchedule a;
    a.T = T;
    a.omegas = Eigen::VectorXd::Ones(T + 1);
    a.xis = Eigen::VectorXd::Ones(T + 1);
    a.omegas(0) = a.xis(0) = 0.0;
    return a;
}

} // namespace linpaint
