#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "linpaint/analysis.hpp"
#include "linpaint/diffusion.hpp"

using namespace linpaint;

namespace {

LinearManifold toy_manifold() {
    Eigen::MatrixXd raw(2, 1);
    raw << 2.0, 3.0;
    return make_manifold(raw);
}

} // namespace

TEST_CASE("resampling_budget worked example") {
    // theta_norm * dist / (eps sqrt(1-beta)) = 3e8, lambda = 3/sqrt(13)
    CHECK(resampling_budget(1e-8, 3.0 / std::sqrt(13.0), 1.0, 3.0, 0.0) == 107);
}

TEST_CASE("resampling_budget edge cases and monotonicity") {
    CHECK(resampling_budget(10.0, 0.5, 1.0, 1.0, 0.0) == 1); // already within eps
    CHECK(resampling_budget(1.0, 0.5, 1.0, 1.0, 0.0) == 1);  // arg = 1 exactly
    CHECK(resampling_budget(0.25, 0.5, 1.0, 1.0, 0.0) == 2); // halving twice

    int prev = 0;
    for (double eps : {1e-1, 1e-2, 1e-4, 1e-8}) {
        const int r = resampling_budget(eps, 0.9, 1.0, 5.0, 0.5);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(resampling_budget(1e-3, 0.9, 1.0, 10.0, 0.0) >=
          resampling_budget(1e-3, 0.9, 1.0, 2.0, 0.0));

    CHECK_THROWS_AS(resampling_budget(1e-3, 1.0, 1.0, 1.0, 0.0), InvalidRate);
    CHECK_THROWS_AS(resampling_budget(0.0, 0.5, 1.0, 1.0, 0.0), OutOfRange);
}

TEST_CASE("noisy_error_ceiling arithmetic") {
    CHECK(noisy_error_ceiling(0.1, 2.0, 0.5, 0.75) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(noisy_error_ceiling(0.0, 5.0, 0.9, 0.5) == 0.0);
    // linear in the model gap
    CHECK(noisy_error_ceiling(0.2, 2.0, 0.5, 0.75) ==
          doctest::Approx(2.0 * noisy_error_ceiling(0.1, 2.0, 0.5, 0.75)).epsilon(1e-15));
    CHECK_THROWS_AS(noisy_error_ceiling(0.1, 1.0, 1.0, 0.5), InvalidRate);
}

TEST_CASE("admissible_delta on the toy mask") {
    CHECK(admissible_delta(1e-2, 0.83205029433784372, 1.0) ==
          doctest::Approx(0.0016794970566215628).epsilon(1e-14));
    CHECK_THROWS_AS(admissible_delta(1e-2, 1.5, 1.0), InvalidRate);
    CHECK_THROWS_AS(admissible_delta(1e-2, 0.5, 0.0), OutOfRange);
}

TEST_CASE("fixed-point oracle on hand-checkable systems") {
    // M = 0: the fixed point is the forcing itself
    Eigen::VectorXd f(2);
    f << 3.0, -1.0;
    CHECK((fixed_point_oracle(Eigen::MatrixXd::Zero(2, 2), f) - f).norm() == 0.0);

    const LinearManifold m = toy_manifold();
    Eigen::VectorXd bits(2);
    bits << 0, 1;
    const InpaintMask mask = make_mask(bits);
    Eigen::MatrixXd pm = m.projector();
    pm.col(0).setZero(); // A A^T D(m)
    const Eigen::MatrixXd pk = m.projector() - pm;
    const Eigen::VectorXd x0 = m.a_matrix * Eigen::VectorXd::Ones(1);

    // biased loop: masked coordinate lands on the derived slope line
    const double c = std::sqrt(0.1);
    const Eigen::VectorXd biased = fixed_point_oracle(c * pm, c * pk * x0);
    CHECK(biased(1) == doctest::Approx(0.18685994872164921 * 2.0 / std::sqrt(13.0))
                           .epsilon(1e-12));

    // corrected loop: the data point itself is the fixed point
    CHECK((fixed_point_oracle(pm, pk * x0) - x0).norm() <= 1e-10);
}

TEST_CASE("fixed-point solve and iterate agree on random contractions") {
    std::mt19937_64 gen(29);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + int(gen() % 5);
        Eigen::MatrixXd mcontr(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) mcontr(i, j) = normal(gen);
        mcontr *= 0.8 / spectral_norm(mcontr);
        Eigen::VectorXd f(d);
        for (int i = 0; i < d; ++i) f(i) = normal(gen);
        const Eigen::VectorXd x = fixed_point_oracle(mcontr, f);
        CHECK((x - (mcontr * x + f)).norm() <= 1e-10);
    }
    CHECK_THROWS_AS(fixed_point_solve(Eigen::MatrixXd::Identity(2, 2),
                                      Eigen::VectorXd::Ones(2)),
                    NotContractive);
    CHECK_THROWS_AS(fixed_point_iterate(2.0 * Eigen::MatrixXd::Identity(2, 2),
                                        Eigen::VectorXd::Ones(2)),
                    NotContractive);
}

TEST_CASE("fit_rate recovers exact geometric decay") {
    const RateFit fit = fit_rate({1.0, 0.5, 0.25, 0.125});
    CHECK(fit.fitted_rate == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.rounds_used == 4);

    const RateFit flat = fit_rate({2.0, 2.0, 2.0, 2.0});
    CHECK(flat.fitted_rate == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_rate drops entries below the precision floor") {
    // the two 1e-20 entries are rounding noise relative to errors[0] = 1
    const RateFit fit = fit_rate({1.0, 0.5, 0.25, 1e-20, 1e-20});
    CHECK(fit.rounds_used == 3);
    CHECK(fit.fitted_rate == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(fit_rate({1.0, 0.5, 1e-20, 1e-20}), TooFewPoints);
}

TEST_CASE("fit_rate input validation") {
    CHECK_THROWS_AS(fit_rate({1.0, 0.5}), TooFewPoints);
    CHECK_THROWS_AS(fit_rate({1.0, 0.0, 0.25}), NonPositiveError);
    CHECK_THROWS_AS(fit_rate({1.0, -0.5, 0.25}), NonPositiveError);
}

TEST_CASE("manifold_residual geometry") {
    const LinearManifold m = toy_manifold();
    CHECK(manifold_residual(m.a_matrix * Eigen::VectorXd::Constant(1, 3.3), m) <= 1e-14);
    Eigen::VectorXd ortho(2);
    ortho << 3.0, -2.0;
    ortho /= ortho.norm();
    CHECK(manifold_residual(ortho, m) == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 gen(31);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x(2);
        x << normal(gen), normal(gen);
        const double res = manifold_residual(x, m);
        const double on = (m.projector() * x).norm();
        CHECK(res * res + on * on == doctest::Approx(x.squaredNorm()).epsilon(1e-12));
    }
    CHECK_THROWS_AS(manifold_residual(Eigen::VectorXd::Zero(3), m), ShapeMismatch);
}

TEST_CASE("latent_moment_test accepts genuine standard normal latents") {
    const LinearManifold m = toy_manifold();
    const int n = 10000;
    SampleBatch batch;
    batch.samples.resize(2, n);
    batch.latents.resize(1, n);
    NoiseSource noise(101, 0);
    for (int i = 0; i < n; ++i) {
        batch.latents.col(i) = noise.gaussian_vector(1);
        batch.samples.col(i) = m.a_matrix * batch.latents.col(i);
    }
    const MomentReport report = latent_moment_test(batch, m);
    CHECK(report.pass());
    CHECK(report.mean_threshold == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(report.cov_threshold == doctest::Approx(0.08).epsilon(1e-15));
}

TEST_CASE("latent_moment_test flags degenerate and mis-scaled latents") {
    const LinearManifold m = toy_manifold();
    const int n = 10000;
    SampleBatch zeros;
    zeros.samples = Eigen::MatrixXd::Zero(2, n);
    const MomentReport degenerate = latent_moment_test(zeros, m);
    CHECK(degenerate.mean_pass);
    CHECK(!degenerate.cov_pass); // covariance gap is ||0 - I|| = 1

    SampleBatch scaled;
    scaled.samples.resize(2, n);
    NoiseSource noise(103, 0);
    for (int i = 0; i < n; ++i)
        scaled.samples.col(i) = m.a_matrix * (4.0 * noise.gaussian_vector(1));
    CHECK(!latent_moment_test(scaled, m).cov_pass);
}

TEST_CASE("latent_moment_test rejects off-manifold and tiny batches") {
    const LinearManifold m = toy_manifold();
    SampleBatch off;
    off.samples = Eigen::MatrixXd::Zero(2, 200);
    off.samples(0, 37) = 3.0; // not in span((2,3))
    CHECK_THROWS_AS(latent_moment_test(off, m), OffManifold);

    SampleBatch tiny;
    tiny.samples = Eigen::MatrixXd::Zero(2, 50);
    CHECK_THROWS_AS(latent_moment_test(tiny, m), TooFewPoints);
}
