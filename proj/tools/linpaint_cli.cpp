// Command-line front end: toy / generate / verify / bound / train / inpaint.
#include <CLI11.hpp>
#include <cstdio>

#include "linpaint/experiments.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int workers = 0;
    bool record_trajectory = false;
    bool seed_set = false;
    bool workers_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value config file");
    cmd->add_option("--out", flags.out_dir, "output directory (default $LINPAINT_OUT or .)");
    cmd->add_option("--seed", flags.seed, "RNG seed")->each([&](const std::string&) {
        flags.seed_set = true;
    });
    cmd->add_option("--workers", flags.workers, "worker thread count")
        ->each([&](const std::string&) { flags.workers_set = true; });
    cmd->add_flag("--record-trajectory", flags.record_trajectory,
                  "record per-round error trajectories");
}

linpaint::ExperimentConfig resolve_config(const CommonFlags& flags) {
    linpaint::ExperimentConfig config;
    if (!flags.config_path.empty())
        config = linpaint::config_from_map(linpaint::parse_config_file(flags.config_path));
    if (flags.seed_set) config.seed = flags.seed;
    if (flags.workers_set) config.workers = flags.workers;
    if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
    if (flags.record_trajectory) config.record_trajectory = true;
    return config;
}

void print_report(const linpaint::ExperimentReport& report) {
    for (const auto& m : report.methods)
        std::printf("%-24s rmse_per_sample=%-24s summed_error=%-24s n=%d\n",
                    m.method.c_str(), linpaint::format_double(m.rmse_per_sample).c_str(),
                    linpaint::format_double(m.summed_error).c_str(), m.n);
    std::printf("wall_seconds=%.3f\n", report.wall_seconds);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-form diffusion inpainting on linear manifolds"};
    app.require_subcommand(1);

    CommonFlags toy_flags, gen_flags, verify_flags, bound_flags_common, train_flags,
        inpaint_flags;
    auto* toy = app.add_subcommand("toy", "two-state baseline vs corrected resampling");
    add_common(toy, toy_flags);
    auto* generate = app.add_subcommand("generate", "sample the exact reverse chain");
    add_common(generate, gen_flags);
    auto* verify = app.add_subcommand("verify", "run the full verification suite");
    add_common(verify, verify_flags);
    auto* bound = app.add_subcommand("bound", "resampling budget and error ceilings");
    add_common(bound, bound_flags_common);
    linpaint::BoundFlags bf;
    bound->add_option("--epsilon", bf.epsilon, "target accuracy");
    bound->add_option("--beta", bf.beta, "two-state variance");
    bound->add_option("--lambda-max", bf.lambda_max, "explicit lambda_max (else from config)");
    bound->add_option("--theta-norm", bf.theta_norm, "||theta|| (default sqrt(1-beta))");
    bound->add_option("--init-distance", bf.init_distance, "||x1 - x0||");
    bound->add_option("--delta-norm", bf.delta_norm, "perturbation norm ||delta||");
    bound->add_option("--kappa", bf.kappa, "compact-support bound on ||x0||");
    bound->add_option("--x0-norm", bf.x0_norm, "||x0|| for the error ceiling");
    auto* train = app.add_subcommand("train", "stochastic training against the closed form");
    add_common(train, train_flags);
    linpaint::TrainingConfig tc;
    std::string loss = "posterior_mean";
    train->add_option("--loss", loss, "posterior_mean | noise_pred");
    train->add_option("--eta", tc.eta, "step size");
    train->add_option("--iterations", tc.iterations, "SGD iterations");
    train->add_option("--batch", tc.batch, "batch size");
    auto* inpaint = app.add_subcommand("inpaint", "ad hoc inpainting run from a config");
    add_common(inpaint, inpaint_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (toy->parsed()) {
            print_report(linpaint::run_toy(resolve_config(toy_flags)));
        } else if (generate->parsed()) {
            print_report(linpaint::run_generate(resolve_config(gen_flags)));
        } else if (verify->parsed()) {
            const auto report = linpaint::run_verify(resolve_config(verify_flags));
            for (const auto& c : report.checks)
                std::printf("%-36s measured=%-24s threshold=%-12s %s\n", c.name.c_str(),
                            linpaint::format_double(c.measured).c_str(),
                            linpaint::format_double(c.threshold).c_str(),
                            c.pass ? "pass" : "FAIL");
            if (!report.all_pass()) return 1;
        } else if (bound->parsed()) {
            const auto report = linpaint::run_bound(resolve_config(bound_flags_common), bf);
            std::printf("lambda_max=%s\nlambda_hat_max=%s\nr_required=%d\n"
                        "error_ceiling=%s\nadmissible_delta=%s\n",
                        linpaint::format_double(report.lambda_max).c_str(),
                        linpaint::format_double(report.lambda_hat_max).c_str(),
                        report.r_required,
                        linpaint::format_double(report.error_ceiling).c_str(),
                        linpaint::format_double(report.admissible_delta).c_str());
        } else if (train->parsed()) {
            if (loss == "posterior_mean") tc.loss_kind = linpaint::LossKind::posterior_mean;
            else if (loss == "noise_pred") tc.loss_kind = linpaint::LossKind::noise_pred;
            else throw linpaint::FlagError("--loss must be posterior_mean or noise_pred");
            const auto config = resolve_config(train_flags);
            tc.seed = config.seed;
            const double gap = linpaint::run_train(config, tc);
            std::printf("theta_gap_frobenius=%s\n", linpaint::format_double(gap).c_str());
        } else if (inpaint->parsed()) {
            print_report(linpaint::run_inpaint(resolve_config(inpaint_flags)));
        }
    } catch (const linpaint::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const linpaint::FlagError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const linpaint::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}
