#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "linpaint/analysis.hpp"
#include "linpaint/core.hpp"
#include "linpaint/generator.hpp"
#include "linpaint/inpainting.hpp"

namespace linpaint {

// Flat key=value configuration, CLI flags override file entries.
struct ExperimentConfig {
    int d = 2;
    int k = 1;
    int T = 1;
    int R = 100;
    int n = 1000;
    std::uint64_t seed = 42;
    int workers = 1;
    bool record_trajectory = false;

    std::string beta_kind = "constant"; // constant | linear
    double beta = 0.9;
    double beta_start = 0.1;
    double beta_end = 0.9;

    std::string mask_bits;      // explicit bits, e.g. "01"; empty = density mode
    double mask_density = 0.5;  // used when mask_bits is empty and not the toy default
    std::uint64_t mask_seed = 0;

    std::string delta_kind = "none"; // none | identity | random
    double delta_scale = 0.0;
    std::uint64_t delta_seed = 0;

    std::string a_source = "toy"; // toy | random (Gaussian raw, orthonormalized)
    std::uint64_t a_seed = 0;

    std::vector<std::string> methods = {"repaint", "repaint_plus_special",
                                        "repaint_then_reverse"};
    std::string out_dir; // empty: $LINPAINT_OUT or "."

    std::string resolved_out_dir() const;
};

std::map<std::string, std::string> parse_config_file(const std::string& path);
ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv);
void write_resolved_config(const ExperimentConfig& config, const std::string& path);

LinearManifold build_manifold(const ExperimentConfig& config);
InpaintMask build_mask(const ExperimentConfig& config);
DiffusionSchedule build_schedule(const ExperimentConfig& config);
Eigen::MatrixXd build_delta(const ExperimentConfig& config);

// Shortest round-trip decimal formatting used in every CSV cell.
std::string format_double(double value);

struct MethodResult {
    std::string method;
    double rmse_per_sample = 0.0; // sqrt(sum_i ||e_i||^2 / n)
    double summed_error = 0.0;    // sqrt(sum_i ||e_i||^2)
    int n = 0;
    std::vector<double> mean_trajectory; // per-round mean error, when recorded
    double fitted_rate = 0.0;            // 0 when not fitted
};

struct ExperimentReport {
    std::vector<MethodResult> methods;
    double wall_seconds = 0.0;
};

struct VerifyCheck {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;
    bool all_pass() const;
};

// Appendix-style toy reproduction: runs the configured two-state methods on a
// shared sample set and writes samples.csv / trajectory.csv / rmse.csv.
ExperimentReport run_toy(const ExperimentConfig& config);

// Draws priors and runs the aligned reverse chain (two-state projection for
// T = 1, the exact multi-state sampler for T >= 2); writes samples.csv.
ExperimentReport run_generate(const ExperimentConfig& config);

// Ad hoc single-instance inpainting run driven entirely by the config.
ExperimentReport run_inpaint(const ExperimentConfig& config);

// Full verification suite; writes verify.csv.
VerifyReport run_verify(const ExperimentConfig& config);

struct BoundFlags {
    double epsilon = 1e-8;
    double beta = 0.9;
    double lambda_max = -1.0; // < 0: compute from config manifold and mask
    double theta_norm = -1.0; // < 0: sqrt(1-beta)
    double init_distance = 3.0;
    double delta_norm = 0.0;
    double kappa = 1.0;
    double x0_norm = 1.0;
};

BoundReport run_bound(const ExperimentConfig& config, const BoundFlags& flags);

// Trains against the closed form and saves the model to out/model.txt;
// returns ||theta_hat - theta*||_F.
double run_train(const ExperimentConfig& config, const TrainingConfig& training);

} // namespace linpaint
