#include "linpaint/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "linpaint/diffusion.hpp"

namespace linpaint {

namespace fs = std::filesystem;

std::string ExperimentConfig::resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv("LINPAINT_OUT"); env && *env) return env;
    return ".";
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    if (!(in >> out) || !(in >> std::ws).eof())
        throw ConfigError("field '" + key + "': cannot parse '" + value + "'");
    return out;
}

std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

} // namespace

ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
    ExperimentConfig c;
    for (const auto& [key, value] : kv) {
        if (key == "d") c.d = parse_number<int>(key, value);
        else if (key == "k") c.k = parse_number<int>(key, value);
        else if (key == "T") c.T = parse_number<int>(key, value);
        else if (key == "R") c.R = parse_number<int>(key, value);
        else if (key == "n") c.n = parse_number<int>(key, value);
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "workers") c.workers = parse_number<int>(key, value);
        else if (key == "record_trajectory") c.record_trajectory = parse_number<int>(key, value) != 0;
        else if (key == "beta_kind") c.beta_kind = value;
        else if (key == "beta") c.beta = parse_number<double>(key, value);
        else if (key == "beta_start") c.beta_start = parse_number<double>(key, value);
        else if (key == "beta_end") c.beta_end = parse_number<double>(key, value);
        else if (key == "mask") c.mask_bits = value;
        else if (key == "mask_density") c.mask_density = parse_number<double>(key, value);
        else if (key == "mask_seed") c.mask_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "delta_kind") c.delta_kind = value;
        else if (key == "delta_scale") c.delta_scale = parse_number<double>(key, value);
        else if (key == "delta_seed") c.delta_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "a_source") c.a_source = value;
        else if (key == "a_seed") c.a_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "methods") c.methods = split_csv(value);
        else if (key == "out") c.out_dir = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
    if (c.d < 1 || c.k < 1 || c.k > c.d) throw ConfigError("need 1 <= k <= d");
    if (c.T < 1) throw ConfigError("T must be >= 1");
    if (c.n < 0) throw ConfigError("n must be >= 0");
    if (c.R < 0) throw ConfigError("R must be >= 0");
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    if (c.beta_kind != "constant" && c.beta_kind != "linear")
        throw ConfigError("beta_kind must be constant or linear");
    if (c.delta_kind != "none" && c.delta_kind != "identity" && c.delta_kind != "random")
        throw ConfigError("delta_kind must be none, identity or random");
    if (c.a_source != "toy" && c.a_source != "random")
        throw ConfigError("a_source must be toy or random");
    if (c.a_source == "toy" && (c.d != 2 || c.k != 1))
        throw ConfigError("toy manifold is d=2, k=1; set a_source=random otherwise");
    return c;
}

void write_resolved_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "d = " << c.d << "\nk = " << c.k << "\nT = " << c.T << "\nR = " << c.R
        << "\nn = " << c.n << "\nseed = " << c.seed << "\nworkers = " << c.workers
        << "\nrecord_trajectory = " << (c.record_trajectory ? 1 : 0)
        << "\nbeta_kind = " << c.beta_kind << "\nbeta = " << format_double(c.beta)
        << "\nbeta_start = " << format_double(c.beta_start)
        << "\nbeta_end = " << format_double(c.beta_end) << "\nmask = " << c.mask_bits
        << "\nmask_density = " << format_double(c.mask_density)
        << "\nmask_seed = " << c.mask_seed << "\ndelta_kind = " << c.delta_kind
        << "\ndelta_scale = " << format_double(c.delta_scale)
        << "\ndelta_seed = " << c.delta_seed << "\na_source = " << c.a_source
        << "\na_seed = " << c.a_seed << "\nmethods = ";
    for (std::size_t i = 0; i < c.methods.size(); ++i)
        out << c.methods[i] << (i + 1 < c.methods.size() ? "," : "");
    out << "\nout = " << c.resolved_out_dir() << "\n";
}

LinearManifold build_manifold(const ExperimentConfig& config) {
    if (config.a_source == "toy") {
        Eigen::MatrixXd raw(2, 1);
        raw << 2.0, 3.0;
        return make_manifold(raw);
    }
    NoiseSource noise(config.a_seed, 0xa);
    Eigen::MatrixXd raw(config.d, config.k);
    for (int j = 0; j < config.k; ++j) raw.col(j) = noise.gaussian_vector(config.d);
    return make_manifold(raw);
}

InpaintMask build_mask(const ExperimentConfig& config) {
    Eigen::VectorXd bits = Eigen::VectorXd::Zero(config.d);
    if (!config.mask_bits.empty()) {
        if (static_cast<int>(config.mask_bits.size()) != config.d)
            throw ConfigError("mask has " + std::to_string(config.mask_bits.size()) +
                              " bits, expected " + std::to_string(config.d));
        for (int i = 0; i < config.d; ++i) {
            const char ch = config.mask_bits[i];
            if (ch != '0' && ch != '1') throw ConfigError("mask bits must be 0/1");
            bits(i) = ch - '0';
        }
    } else if (config.a_source == "toy") {
        bits(1) = 1.0; // default toy mask: second coordinate missing
    } else {
        NoiseSource noise(config.mask_seed, 0xb);
        std::mt19937_64 gen(config.mask_seed ^ 0x6d61736bULL);
        std::bernoulli_distribution coin(config.mask_density);
        for (int i = 0; i < config.d; ++i) bits(i) = coin(gen) ? 1.0 : 0.0;
    }
    return make_mask(bits);
}

DiffusionSchedule build_schedule(const ExperimentConfig& config) {
    Eigen::VectorXd betas(config.T);
    if (config.beta_kind == "constant") {
        betas.setConstant(config.beta);
    } else {
        for (int t = 0; t < config.T; ++t)
            betas(t) = config.T == 1
                           ? config.beta_start
                           : config.beta_start + (config.beta_end - config.beta_start) *
                                                     double(t) / (config.T - 1);
    }
    return make_schedule(betas);
}

Eigen::MatrixXd build_delta(const ExperimentConfig& config) {
    if (config.delta_kind == "none")
        return Eigen::MatrixXd::Zero(config.d, config.d);
    if (config.delta_kind == "identity")
        return config.delta_scale * Eigen::MatrixXd::Identity(config.d, config.d);
    NoiseSource noise(config.delta_seed, 0xd);
    Eigen::MatrixXd delta(config.d, config.d);
    for (int j = 0; j < config.d; ++j) delta.col(j) = noise.gaussian_vector(config.d);
    return config.delta_scale * delta / spectral_norm(delta);
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

namespace {

void parallel_samples(int n, int workers, const std::function<void(int)>& body) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        const int lo = static_cast<int>(std::int64_t(n) * w / workers);
        const int hi = static_cast<int>(std::int64_t(n) * (w + 1) / workers);
        pool.emplace_back([&body, lo, hi] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::ofstream open_csv(const fs::path& path) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF endings everywhere
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    return out;
}

void write_sample_rows(std::ofstream& out, const std::string& method,
                       const std::string& kind, int sample_id, const Eigen::VectorXd& x) {
    for (int c = 0; c < x.size(); ++c)
        out << method << "," << sample_id << "," << c << "," << format_double(x(c)) << ","
            << kind << "\n";
}

struct MethodAccumulator {
    std::vector<double> sq_errors;             // per sample, fixed order
    std::vector<std::vector<double>> round_errors; // per sample, per round
    std::vector<Eigen::VectorXd> outputs;
};

MethodResult reduce_method(const std::string& name, const MethodAccumulator& acc) {
    MethodResult r;
    r.method = name;
    r.n = static_cast<int>(acc.sq_errors.size());
    double total = 0.0;
    for (double e : acc.sq_errors) total += e; // deterministic fixed-order sum
    r.summed_error = std::sqrt(total);
    r.rmse_per_sample = r.n > 0 ? std::sqrt(total / r.n) : 0.0;
    if (!acc.round_errors.empty() && !acc.round_errors[0].empty()) {
        const std::size_t rounds = acc.round_errors[0].size();
        r.mean_trajectory.assign(rounds, 0.0);
        for (const auto& traj : acc.round_errors)
            for (std::size_t j = 0; j < rounds; ++j) r.mean_trajectory[j] += traj[j];
        for (double& v : r.mean_trajectory) v /= double(acc.round_errors.size());
    }
    return r;
}

void write_rmse_csv(const fs::path& dir, const std::vector<MethodResult>& methods) {
    auto out = open_csv(dir / "rmse.csv");
    out << "method,rmse_per_sample,summed_error,n\n";
    for (const auto& m : methods)
        out << m.method << "," << format_double(m.rmse_per_sample) << ","
            << format_double(m.summed_error) << "," << m.n << "\n";
}

void write_trajectory_csv(const fs::path& dir, const std::vector<MethodResult>& methods) {
    auto out = open_csv(dir / "trajectory.csv");
    out << "method,round,mean_error\n";
    for (const auto& m : methods)
        for (std::size_t r = 0; r < m.mean_trajectory.size(); ++r)
            out << m.method << "," << (r + 1) << "," << format_double(m.mean_trajectory[r])
                << "\n";
}

std::vector<double> trajectory_errors(const InpaintRun& run, const Eigen::VectorXd& truth) {
    std::vector<double> out;
    out.reserve(run.trajectory.size());
    for (const auto& x : run.trajectory) out.push_back((x - truth).norm());
    return out;
}

} // namespace

ExperimentReport run_toy(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    if (config.T != 1) throw ConfigError("toy run is two-state (T = 1)");
    const LinearManifold manifold = build_manifold(config);
    const InpaintMask mask = build_mask(config);
    const double lambda = validate_mask(mask, manifold);
    if (!mask_is_valid(lambda))
        throw InvalidMask("config mask has lambda_max = " + std::to_string(lambda));
    const GeneratorModel model = closed_form_two_state(manifold, config.beta);

    const int n = config.n;
    std::vector<Eigen::VectorXd> truths(n), priors(n);
    std::map<std::string, MethodAccumulator> acc;
    for (const auto& m : config.methods) {
        acc[m].sq_errors.assign(n, 0.0);
        acc[m].outputs.assign(n, Eigen::VectorXd());
        if (config.record_trajectory) acc[m].round_errors.assign(n, {});
    }

    parallel_samples(n, config.workers, [&](int i) {
        NoiseSource noise(config.seed, static_cast<std::uint64_t>(i));
        const Eigen::VectorXd z = noise.gaussian_vector(manifold.k);
        const Eigen::VectorXd x0 = manifold.a_matrix * z;
        const Eigen::VectorXd x1 = noise.gaussian_vector(manifold.d);
        truths[i] = x0;
        priors[i] = x1;
        for (const auto& name : config.methods) {
            InpaintRun run;
            if (name == "repaint")
                run = repaint_two_state(x0, mask, model, config.R, x1, config.record_trajectory);
            else if (name == "repaint_plus_special")
                run = repaint_plus_two_state(x0, mask, model, config.R, x1,
                                             config.record_trajectory);
            else if (name == "repaint_then_reverse")
                run = repaint_then_reverse(x0, mask, model, config.R, x1);
            else
                throw ConfigError("toy run does not support method '" + name + "'");
            auto& slot = acc[name];
            slot.outputs[i] = run.output;
            slot.sq_errors[i] = (run.output - x0).squaredNorm();
            if (config.record_trajectory) slot.round_errors[i] = trajectory_errors(run, x0);
        }
    });

    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    write_resolved_config(config, (dir / "config_resolved.txt").string());
    auto samples_csv = open_csv(dir / "samples.csv");
    samples_csv << "method,sample_id,coord_index,value,kind\n";
    for (int i = 0; i < n; ++i) {
        write_sample_rows(samples_csv, "data", "true", i, truths[i]);
        write_sample_rows(samples_csv, "data", "prior", i, priors[i]);
    }
    for (const auto& name : config.methods)
        for (int i = 0; i < n; ++i)
            write_sample_rows(samples_csv, name, "recovered", i, acc[name].outputs[i]);

    ExperimentReport report;
    for (const auto& name : config.methods) {
        MethodResult r = reduce_method(name, acc[name]);
        if (!r.mean_trajectory.empty()) {
            std::vector<double> positive;
            for (double e : r.mean_trajectory)
                if (e > 0.0) positive.push_back(e);
            if (positive.size() >= 3) r.fitted_rate = fit_rate(positive).fitted_rate;
        }
        report.methods.push_back(std::move(r));
    }
    write_rmse_csv(dir, report.methods);
    write_trajectory_csv(dir, report.methods);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

ExperimentReport run_generate(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const LinearManifold manifold = build_manifold(config);
    const DiffusionSchedule schedule = build_schedule(config);
    const int d = manifold.d;
    const int n = config.n;

    GeneratorModel model;
    AlignmentSchedule alignment;
    if (schedule.T == 1) {
        model = closed_form_two_state(manifold, schedule.betas(1));
        alignment = make_inpainting_alignment(schedule, std::sqrt(1.0 - schedule.betas(1)));
    } else {
        model = closed_form_multi_state(manifold, schedule, true);
        alignment = make_sampling_alignment(schedule, multi_state_coefficients(schedule).nu_bar);
    }

    std::vector<Eigen::VectorXd> truths(n), priors(n), generated(n);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    parallel_samples(n, config.workers, [&](int i) {
        NoiseSource noise(config.seed, static_cast<std::uint64_t>(i));
        truths[i] = manifold.a_matrix * noise.gaussian_vector(manifold.k);
        Eigen::VectorXd x = noise.gaussian_vector(d);
        priors[i] = x;
        for (int t = schedule.T; t >= 1; --t) {
            const Eigen::VectorXd eps = (t > 1) ? noise.gaussian_vector(d) : zero;
            x = reverse_step(model, x, t, alignment, eps);
        }
        generated[i] = x;
    });

    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    write_resolved_config(config, (dir / "config_resolved.txt").string());
    auto samples_csv = open_csv(dir / "samples.csv");
    samples_csv << "method,sample_id,coord_index,value,kind\n";
    for (int i = 0; i < n; ++i) {
        write_sample_rows(samples_csv, "data", "true", i, truths[i]);
        write_sample_rows(samples_csv, "generate", "prior", i, priors[i]);
        write_sample_rows(samples_csv, "generate", "recovered", i, generated[i]);
    }

    ExperimentReport report;
    MethodResult r;
    r.method = "generate";
    r.n = n;
    report.methods.push_back(r);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

ExperimentReport run_inpaint(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const LinearManifold manifold = build_manifold(config);
    const InpaintMask mask = build_mask(config);
    const DiffusionSchedule schedule = build_schedule(config);
    const double lambda = validate_mask(mask, manifold);
    if (!mask_is_valid(lambda))
        throw InvalidMask("config mask has lambda_max = " + std::to_string(lambda));

    GeneratorModel two_state_model, multi_model;
    AlignmentSchedule inpaint_alignment;
    if (schedule.T == 1) {
        two_state_model = closed_form_two_state(manifold, schedule.betas(1));
        if (config.delta_kind != "none")
            two_state_model =
                perturb_generator(two_state_model, build_delta(config), manifold, mask).model;
    }
    if (schedule.T >= 1) {
        multi_model = closed_form_multi_state(manifold, schedule, true);
        inpaint_alignment =
            make_inpainting_alignment(schedule, multi_state_coefficients(schedule).nu_bar);
    }

    const int n = config.n;
    const int nm = static_cast<int>(config.methods.size());
    std::vector<Eigen::VectorXd> truths(n), priors(n);
    std::map<std::string, MethodAccumulator> acc;
    for (const auto& m : config.methods) {
        acc[m].sq_errors.assign(n, 0.0);
        acc[m].outputs.assign(n, Eigen::VectorXd());
        if (config.record_trajectory) acc[m].round_errors.assign(n, {});
    }

    parallel_samples(n, config.workers, [&](int i) {
        NoiseSource data_noise(config.seed, std::uint64_t(i) * (nm + 1));
        const Eigen::VectorXd z = data_noise.gaussian_vector(manifold.k);
        const Eigen::VectorXd x0 = manifold.a_matrix * z;
        const Eigen::VectorXd x_top = data_noise.gaussian_vector(manifold.d);
        truths[i] = x0;
        priors[i] = x_top;
        for (int j = 0; j < nm; ++j) {
            const std::string& name = config.methods[j];
            NoiseSource noise(config.seed, std::uint64_t(i) * (nm + 1) + 1 + j);
            InpaintRun run;
            if (name == "repaint")
                run = repaint_two_state(x0, mask, two_state_model, config.R, x_top,
                                        config.record_trajectory);
            else if (name == "repaint_plus_special")
                run = repaint_plus_two_state(x0, mask, two_state_model, config.R, x_top,
                                             config.record_trajectory);
            else if (name == "repaint_then_reverse")
                run = repaint_then_reverse(x0, mask, two_state_model, config.R, x_top);
            else if (name == "repaint_plus_general")
                run = repaint_plus_general(x0, mask, multi_model, schedule, inpaint_alignment,
                                           config.R, noise, config.record_trajectory, x_top);
            else if (name == "slow_diffusion")
                run = slow_diffusion_inpaint(
                    x0, mask, multi_model, schedule,
                    make_sampling_alignment(schedule,
                                            multi_state_coefficients(schedule).nu_bar),
                    noise, false, x_top);
            else
                throw ConfigError("unknown method '" + name + "'");
            auto& slot = acc[name];
            slot.outputs[i] = run.output;
            slot.sq_errors[i] = (run.output - x0).squaredNorm();
            if (config.record_trajectory) slot.round_errors[i] = trajectory_errors(run, x0);
        }
    });

    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    write_resolved_config(config, (dir / "config_resolved.txt").string());
    auto samples_csv = open_csv(dir / "samples.csv");
    samples_csv << "method,sample_id,coord_index,value,kind\n";
    for (int i = 0; i < n; ++i) {
        write_sample_rows(samples_csv, "data", "true", i, truths[i]);
        write_sample_rows(samples_csv, "data", "prior", i, priors[i]);
    }
    for (const auto& name : config.methods)
        for (int i = 0; i < n; ++i)
            write_sample_rows(samples_csv, name, "recovered", i, acc[name].outputs[i]);

    ExperimentReport report;
    for (const auto& name : config.methods)
        report.methods.push_back(reduce_method(name, acc[name]));
    write_rmse_csv(dir, report.methods);
    write_trajectory_csv(dir, report.methods);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

bool VerifyReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const VerifyCheck& c) { return c.pass; });
}

namespace {

// Toy fixtures shared by the verification checks.
struct ToyFixture {
    LinearManifold manifold;
    InpaintMask mask;
    GeneratorModel model;
    double beta = 0.9;
    double lambda = 0.0;
};

ToyFixture make_toy() {
    ToyFixture f;
    Eigen::MatrixXd raw(2, 1);
    raw << 2.0, 3.0;
    f.manifold = make_manifold(raw);
    Eigen::VectorXd bits(2);
    bits << 0.0, 1.0;
    f.mask = make_mask(bits);
    f.model = closed_form_two_state(f.manifold, f.beta);
    f.lambda = validate_mask(f.mask, f.manifold);
    return f;
}

} // namespace

VerifyReport run_verify(const ExperimentConfig& config) {
    VerifyReport report;
    auto add = [&report](const std::string& name, double measured, double threshold,
                         bool pass) {
        report.checks.push_back({name, measured, threshold, pass});
    };
    const ToyFixture toy = make_toy();
    const std::uint64_t seed = config.seed;

    { // closed form solves the population normal equations
        const GeneratorModel pop = population_two_state_solve(toy.manifold, toy.beta);
        const double gap = (pop.theta - toy.model.theta).norm();
        add("population_solve_matches_closed_form", gap, 1e-10, gap <= 1e-10);
    }
    { // stochastic training lands near the closed form
        TrainingConfig tc;
        tc.seed = seed;
        const GeneratorModel trained =
            train_ddpm(toy.manifold, toy.model.schedule, tc);
        const double gap = (trained.theta - toy.model.theta).norm();
        add("trained_matches_closed_form", gap, 0.05, gap <= 0.05);

        TrainingConfig nc = tc;
        nc.loss_kind = LossKind::noise_pred;
        const GeneratorModel noise_trained =
            train_ddpm(toy.manifold, toy.model.schedule, nc);
        const double equiv = spectral_norm(noise_trained.theta - trained.theta);
        add("noise_pred_equivalence", equiv, 0.05, equiv <= 0.05);
    }
    { // per-round error bound holds pathwise, and fails for the unaligned drift
        double worst = -1e300;
        double repaint_final = 0.0;
        const int runs = 200, R = 100;
        for (int i = 0; i < runs; ++i) {
            NoiseSource noise(seed, 0x1000 + i);
            const Eigen::VectorXd x0 = toy.manifold.a_matrix * noise.gaussian_vector(1);
            const Eigen::VectorXd x1 = noise.gaussian_vector(2);
            const InpaintRun run = repaint_plus_two_state(x0, toy.mask, toy.model, R, x1, true);
            // ||theta|| ||x1 - x0|| / sqrt(1-beta), and ||theta|| = sqrt(1-beta)
            const double prefactor = (x1 - x0).norm();
            for (int r = 1; r <= R; ++r) {
                const double err = (run.trajectory[r - 1] - x0).norm();
                worst = std::max(worst, err - std::pow(toy.lambda, r) * prefactor);
            }
            const InpaintRun biased = repaint_two_state(x0, toy.mask, toy.model, R, x1, false);
            repaint_final = std::max(repaint_final, (biased.output - x0).norm() -
                                                        std::pow(toy.lambda, R) * prefactor);
        }
        add("contraction_bound_pathwise", worst, 1e-10, worst <= 1e-10);
        add("unaligned_drift_violates_bound", repaint_final, 0.0, repaint_final > 0.0);
    }
    { // perturbed-model limiting error stays under its ceiling
        const Eigen::MatrixXd delta = 0.01 * Eigen::MatrixXd::Identity(2, 2);
        const PerturbedModel pm = perturb_generator(toy.model, delta, toy.manifold, toy.mask);
        const double theta_gap = spectral_norm(pm.model.theta - toy.model.theta);
        double worst_ratio = 0.0;
        for (int i = 0; i < 200; ++i) {
            NoiseSource noise(seed, 0x2000 + i);
            const Eigen::VectorXd x0 = toy.manifold.a_matrix * noise.gaussian_vector(1);
            if (x0.norm() < 1e-3) continue; // ratio is meaningless at the origin
            const Eigen::VectorXd x1 = noise.gaussian_vector(2);
            const InpaintRun run = repaint_plus_two_state(x0, toy.mask, pm.model, 500, x1, false);
            const double ceiling =
                noisy_error_ceiling(theta_gap, x0.norm(), pm.lambda_hat_max, toy.beta);
            worst_ratio = std::max(worst_ratio, (run.output - x0).norm() / ceiling);
        }
        add("perturbed_error_under_ceiling", worst_ratio, 1.0, worst_ratio <= 1.0);
    }
    { // one generator serves every valid mask at d = 6, k = 3
        ExperimentConfig sweep;
        sweep.d = 6;
        sweep.k = 3;
        sweep.a_source = "random";
        sweep.a_seed = 11;
        const LinearManifold manifold = build_manifold(sweep);
        const double beta = 0.5;
        const GeneratorModel model = closed_form_two_state(manifold, beta);
        const double epsilon = 1e-6;
        double worst = 0.0;
        int valid_masks = 0;
        for (int bits = 1; bits < (1 << 6); ++bits) {
            Eigen::VectorXd mvec(6);
            for (int j = 0; j < 6; ++j) mvec(j) = (bits >> j) & 1;
            const InpaintMask mask = make_mask(mvec);
            const double lam = validate_mask(mask, manifold);
            if (!mask_is_valid(lam)) continue;
            ++valid_masks;
            for (int i = 0; i < 10; ++i) {
                NoiseSource noise(seed, 0x3000 + bits * 16 + i);
                const Eigen::VectorXd x0 = manifold.a_matrix * noise.gaussian_vector(3);
                const Eigen::VectorXd x1 = noise.gaussian_vector(6);
                const int budget = resampling_budget(epsilon, lam, std::sqrt(1.0 - beta),
                                                     (x1 - x0).norm(), beta);
                const InpaintRun run =
                    repaint_plus_two_state(x0, mask, model, budget, x1, false);
                worst = std::max(worst, (run.output - x0).norm());
            }
        }
        add("universal_mask_sweep", worst, epsilon, valid_masks > 0 && worst <= epsilon);
    }
    { // exact multi-state sampler has N(0, I) latents on the manifold
        ExperimentConfig gen;
        gen.T = 4;
        gen.beta_kind = "constant";
        gen.beta = 0.5;
        gen.n = 20000;
        gen.seed = seed;
        const DiffusionSchedule schedule = build_schedule(gen);
        const GeneratorModel model = closed_form_multi_state(toy.manifold, schedule, true);
        const AlignmentSchedule alignment =
            make_sampling_alignment(schedule, multi_state_coefficients(schedule).nu_bar);
        SampleBatch batch;
        batch.samples.resize(2, gen.n);
        batch.seed = seed;
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
        for (int i = 0; i < gen.n; ++i) {
            NoiseSource noise(seed, 0x4000 + i);
            Eigen::VectorXd x = noise.gaussian_vector(2);
            for (int t = 4; t >= 1; --t)
                x = reverse_step(model, x, t, alignment,
                                 t > 1 ? noise.gaussian_vector(2) : zero);
            batch.samples.col(i) = x;
        }
        const MomentReport moments = latent_moment_test(batch, toy.manifold);
        const double score = std::max(moments.mean_norm / moments.mean_threshold,
                                      moments.cov_gap / moments.cov_threshold);
        add("exact_sampler_latent_moments", score, 1.0, moments.pass());
    }
    { // single-pass bias persists while resampling keeps contracting
        ExperimentConfig inst;
        inst.d = 2;
        inst.k = 1;
        inst.a_source = "random";
        Eigen::MatrixXd raw(2, 1);
        raw << 0.15, std::sqrt(1.0 - 0.15 * 0.15);
        const LinearManifold manifold = make_manifold(raw);
        Eigen::VectorXd bits(2);
        bits << 1.0, 0.0;
        const InpaintMask mask = make_mask(bits);
        const double beta_two = 0.9;
        const GeneratorModel two_state = closed_form_two_state(manifold, beta_two);
        double min_ratio = 1e300;
        for (int T : {2, 8, 32}) {
            const DiffusionSchedule schedule =
                make_schedule(Eigen::VectorXd::Constant(T, 0.1));
            const GeneratorModel model = closed_form_multi_state(manifold, schedule, true);
            const AlignmentSchedule alignment =
                make_sampling_alignment(schedule, multi_state_coefficients(schedule).nu_bar);
            double slow_sq = 0.0, fast_sq = 0.0;
            const int runs = 300;
            for (int i = 0; i < runs; ++i) {
                NoiseSource noise(seed, 0x5000 + T * 1000 + i);
                const Eigen::VectorXd x0 = manifold.a_matrix * noise.gaussian_vector(1);
                const Eigen::VectorXd x_top = noise.gaussian_vector(2);
                const InpaintRun slow = slow_diffusion_inpaint(x0, mask, model, schedule,
                                                               alignment, noise, false, x_top);
                slow_sq += (slow.output - x0).squaredNorm();
                const InpaintRun fast =
                    repaint_plus_two_state(x0, mask, two_state, T, x_top, false);
                fast_sq += (fast.output - x0).squaredNorm();
            }
            min_ratio = std::min(min_ratio, std::sqrt(slow_sq / fast_sq));
        }
        add("single_pass_bias_persists", min_ratio, 10.0, min_ratio > 10.0);
    }
    { // full masks are rejected
        Eigen::VectorXd bits(2);
        bits << 1.0, 1.0;
        const InpaintMask full = make_mask(bits);
        bool rejected = false;
        try {
            repaint_plus_two_state(Eigen::VectorXd::Zero(2), full, toy.model, 1,
                                   Eigen::VectorXd::Zero(2), false);
        } catch (const InvalidMask&) {
            rejected = true;
        }
        add("invalid_mask_rejected", rejected ? 1.0 : 0.0, 1.0, rejected);
    }

    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    auto out = open_csv(dir / "verify.csv");
    out << "check,measured,threshold,pass\n";
    for (const auto& c : report.checks)
        out << c.name << "," << format_double(c.measured) << ","
            << format_double(c.threshold) << "," << (c.pass ? 1 : 0) << "\n";
    return report;
}

BoundReport run_bound(const ExperimentConfig& config, const BoundFlags& flags) {
    BoundReport report;
    if (flags.lambda_max >= 0.0) {
        report.lambda_max = flags.lambda_max;
    } else {
        const LinearManifold manifold = build_manifold(config);
        report.lambda_max = validate_mask(build_mask(config), manifold);
    }
    const double theta_norm =
        flags.theta_norm >= 0.0 ? flags.theta_norm : std::sqrt(1.0 - flags.beta);
    // lambda_hat bounded by lambda + ||delta|| (submultiplicative estimate).
    report.lambda_hat_max = std::min(report.lambda_max + flags.delta_norm, 1.0 - 1e-12);
    report.r_required = resampling_budget(flags.epsilon, report.lambda_max, theta_norm,
                                          flags.init_distance, flags.beta);
    report.error_ceiling = noisy_error_ceiling(flags.delta_norm * std::sqrt(1.0 - flags.beta),
                                               flags.x0_norm, report.lambda_hat_max,
                                               flags.beta);
    report.admissible_delta =
        admissible_delta(flags.epsilon, report.lambda_hat_max, flags.kappa);

    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    auto out = open_csv(dir / "bound.csv");
    out << "lambda_max,lambda_hat_max,r_required,error_ceiling,admissible_delta\n";
    out << format_double(report.lambda_max) << "," << format_double(report.lambda_hat_max)
        << "," << report.r_required << "," << format_double(report.error_ceiling) << ","
        << format_double(report.admissible_delta) << "\n";
    return report;
}

double run_train(const ExperimentConfig& config, const TrainingConfig& training) {
    const LinearManifold manifold = build_manifold(config);
    const DiffusionSchedule schedule = build_schedule(config);
    const GeneratorModel trained = train_ddpm(manifold, schedule, training);
    const GeneratorModel exact = schedule.T == 1
                                     ? closed_form_two_state(manifold, schedule.betas(1))
                                     : closed_form_multi_state(manifold, schedule, false);
    const fs::path dir = config.resolved_out_dir();
    fs::create_directories(dir);
    save_generator(trained, (dir / "model.txt").string());
    return (trained.theta - exact.theta).norm();
}

} // namespace linpaint
