#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "so3dist/fit.hpp"
#include "so3dist/io.hpp"

namespace {

using namespace so3dist;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

double to_degrees(double rad) { return rad * 180.0 / M_PI; }

So3Kind parse_so3_kind(const std::string& name) {
    if (name == "rl") return So3Kind::RotationLaplace;
    if (name == "mf") return So3Kind::MatrixFisher;
    throw ParseError("unknown distribution '" + name + "' (expected rl|mf)");
}

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

// Synthetic dataset: Haar-random ground truth, heavy-tailed inliers around it
// with concentration s, and a fraction of Haar-uniform outliers replacing
// inliers. Fitters never see the labels.
RotationDataset make_dataset(std::uint64_t seed, int n, double s, double fraction) {
    Rng rng(seed);
    const Mat3 truth = random_rotation(rng);
    const int n_out = static_cast<int>(std::lround(fraction * n));
    const So3Param concentration(s * Mat3::Identity());
    const auto inliers = tangent_sample(concentration, truth, rng, n - n_out);

    RotationDataset dataset;
    dataset.format = RotationFormat::RotMat9;
    dataset.ground_truth = truth;
    dataset.records.reserve(n);
    int id = 0;
    for (const Mat3& r : inliers) {
        dataset.records.push_back({std::to_string(id++), r, "inlier"});
    }
    for (int i = 0; i < n_out; ++i) {
        dataset.records.push_back({std::to_string(id++), random_rotation(rng),
                                   "outlier"});
    }
    return dataset;
}

void parallel_for(int jobs, int count, const std::function<void(int)>& body) {
    if (jobs <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int n_threads = std::min(jobs, count);
    workers.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& w : workers) w.join();
}

// --- grid ---------------------------------------------------------------

int cmd_grid(int level, const std::string& out, const std::string& format) {
    const auto grid = shared_so3_grid(level);
    if (format == "bin") {
        write_grid_binary(*grid, out);
    } else if (format == "csv") {
        write_grid_csv(*grid, out);
    } else {
        throw ParseError("unknown grid format '" + format + "'");
    }
    std::cout << "grid level " << level << ": " << grid->size()
              << " rotations -> " << out << "\n";
    return kExitOk;
}

// --- density ------------------------------------------------------------

int cmd_density(const std::string& dist, const std::string& param_path,
                int level, const std::string& query_path,
                const std::string& out_path) {
    const ParamFile params = read_param_json(param_path);
    const RotationDataset queries = read_rotation_csv(query_path);
    std::ofstream out = open_out(out_path);
    out << "id,log_prob,prob\n";

    if (dist == "rl" || dist == "mf") {
        if (!params.a) throw ParseError(param_path + ": needs key \"A\"");
        const So3Kind kind = parse_so3_kind(dist);
        const So3Param param(*params.a);
        const auto grid = shared_so3_grid(level);
        const double log_f = log_normalization_factor(kind, param, *grid);
        for (const auto& rec : queries.records) {
            const double k = kind == So3Kind::RotationLaplace
                                 ? rl_log_unnormalized(param, rec.rotation)
                                 : mf_log_unnormalized(param, rec.rotation);
            const double lp = k - log_f;
            out << rec.id << ',' << format_g(lp) << ',' << format_g(std::exp(lp))
                << "\n";
        }
    } else if (dist == "ql" || dist == "bingham") {
        QuatParam param;
        if (params.quat) {
            param = *params.quat;
        } else if (params.a) {
            param = ql_from_rl(So3Param(*params.a));
        } else {
            throw ParseError(param_path + ": needs \"M\",\"z\" or \"A\"");
        }
        const S3Kind kind = dist == "ql" ? S3Kind::QuatLaplace : S3Kind::Bingham;
        const auto grid = shared_s3_grid(level);
        const double log_f = s3_log_normalization_factor(kind, param, *grid);
        for (const auto& rec : queries.records) {
            const Quat q = rotmat_to_quat(rec.rotation);
            const double k = kind == S3Kind::QuatLaplace
                                 ? ql_log_unnormalized(param, q)
                                 : bingham_log_unnormalized(param, q);
            const double lp = k - log_f;
            out << rec.id << ',' << format_g(lp) << ',' << format_g(std::exp(lp))
                << "\n";
        }
    } else {
        throw ParseError("unknown distribution '" + dist +
                         "' (expected rl|mf|ql|bingham)");
    }
    return kExitOk;
}

// --- synth --------------------------------------------------------------

int cmd_synth(std::uint64_t seed, int n, double s, double fraction,
              const std::string& format, const std::string& out_path) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw ParseError("outlier fraction must be in [0, 1)");
    }
    RotationDataset dataset = make_dataset(seed, n, s, fraction);
    if (format == "quat_wxyz") {
        dataset.format = RotationFormat::QuatWxyz;
    } else if (format != "rotmat9") {
        throw ParseError("unknown format '" + format + "'");
    }
    write_rotation_csv(dataset, out_path);
    std::cout << "synth: n=" << n << " outliers="
              << static_cast<int>(std::lround(fraction * n)) << " -> " << out_path
              << "\n";
    return kExitOk;
}

// --- fit ----------------------------------------------------------------

nlohmann::json report_to_json(const FitReport& report) {
    nlohmann::json j;
    for (int i = 0; i < 3; ++i)
        j["A"].push_back({report.final_a(i, 0), report.final_a(i, 1),
                          report.final_a(i, 2)});
    j["nll"] = report.nll;
    j["gradient_norm"] = report.gradient_norm;
    const Quat q = rotmat_to_quat(report.mode);
    j["mode_quat_wxyz"] = {q.w, q.x, q.y, q.z};
    j["converged"] = report.converged;
    j["iterations"] = report.iterations;
    switch (report.stop) {
        case StopReason::GradientTolerance: j["stop"] = "gradient_tolerance"; break;
        case StopReason::MaxIterations: j["stop"] = "max_iterations"; break;
        case StopReason::StepFloor: j["stop"] = "step_floor"; break;
    }
    return j;
}

int cmd_fit(const std::string& data_path, const std::string& dist, int level,
            double step, int iters, double tol, const std::string& init,
            const std::string& init_param, const std::string& out_path) {
    const RotationDataset dataset = read_rotation_csv(data_path);
    if (dataset.records.size() < 2) {
        throw ParseError(data_path + ": need at least 2 observations");
    }
    FitConfig config;
    config.kind = parse_so3_kind(dist);
    config.level = level;
    config.step = step;
    config.max_iterations = iters;
    config.tolerance = tol;
    if (init == "zero") {
        config.init = InitKind::Zero;
    } else if (init == "spread") {
        config.init = InitKind::SpreadMatched;
    } else if (init == "file") {
        const ParamFile p = read_param_json(init_param);
        if (!p.a) throw ParseError(init_param + ": needs key \"A\"");
        config.init = InitKind::Explicit;
        config.init_a = *p.a;
    } else {
        throw ParseError("unknown init '" + init + "' (expected zero|spread|file)");
    }

    const auto grid = shared_so3_grid(level);
    const FitReport report = fit_mle(dataset.observations(), config, *grid);
    const So3Param fitted(report.final_a);
    const double h = entropy(config.kind, fitted, *grid);

    nlohmann::json j = report_to_json(report);
    j["entropy"] = h;
    j["final_nll"] = report.nll.back();
    if (dataset.ground_truth) {
        j["mode_error_degrees"] =
            to_degrees(geodesic_distance(report.mode, *dataset.ground_truth));
    }
    if (!out_path.empty()) {
        std::ofstream out = open_out(out_path);
        out << j.dump(2) << "\n";
    }

    const Quat q = rotmat_to_quat(report.mode);
    std::cout << "fit " << dist << ": mode_quat_wxyz=(" << format_g(q.w) << ","
              << format_g(q.x) << "," << format_g(q.y) << "," << format_g(q.z)
              << ") nll=" << format_g(report.nll.back()) << " entropy="
              << format_g(h);
    if (dataset.ground_truth) {
        std::cout << " error_deg="
                  << format_g(j["mode_error_degrees"].get<double>());
    }
    std::cout << " converged=" << (report.converged ? "true" : "false") << "\n";
    return kExitOk;
}

// --- compare ------------------------------------------------------------

struct TrialResult {
    double rl_error = 0.0;
    double mf_error = 0.0;
};

TrialResult run_trial(std::uint64_t seed, int n, double s, double fraction,
                      const So3Grid& grid) {
    const RotationDataset dataset = make_dataset(seed, n, s, fraction);
    const auto obs = dataset.observations();
    TrialResult result;
    for (const So3Kind kind :
         {So3Kind::RotationLaplace, So3Kind::MatrixFisher}) {
        FitConfig config;
        config.kind = kind;
        config.level = grid.level;
        const FitReport report = fit_mle(obs, config, grid);
        const double err =
            to_degrees(geodesic_distance(report.mode, *dataset.ground_truth));
        (kind == So3Kind::RotationLaplace ? result.rl_error : result.mf_error) =
            err;
    }
    return result;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

int cmd_compare(int trials, const std::vector<double>& fractions, int n,
                double s, int level, std::uint64_t seed, int jobs,
                const std::string& out_path) {
    const auto grid = shared_so3_grid(level);
    std::ofstream out = open_out(out_path);
    out << "fraction,dist,median_error_deg,mean_error_deg,rl_win_rate\n";

    for (const double fraction : fractions) {
        std::vector<TrialResult> results(trials);
        parallel_for(jobs, trials, [&](int t) {
            results[t] = run_trial(seed + t, n, s, fraction, *grid);
        });
        std::vector<double> rl, mf;
        int wins = 0;
        for (const auto& r : results) {
            rl.push_back(r.rl_error);
            mf.push_back(r.mf_error);
            if (r.rl_error <= r.mf_error) ++wins;
        }
        const double win_rate = static_cast<double>(wins) / trials;
        out << format_g(fraction) << ",rl," << format_g(median(rl)) << ','
            << format_g(mean(rl)) << ',' << format_g(win_rate) << "\n";
        out << format_g(fraction) << ",mf," << format_g(median(mf)) << ','
            << format_g(mean(mf)) << ',' << format_g(win_rate) << "\n";
        std::cout << "fraction " << fraction << ": RL med "
                  << format_g(median(rl)) << " MF med " << format_g(median(mf))
                  << " RL wins " << format_g(win_rate) << "\n";
    }
    return kExitOk;
}

// --- gradprofile --------------------------------------------------------

int cmd_gradprofile(const std::string& data_path, const std::string& dist,
                    int level, const std::string& param_path,
                    const std::string& out_path, const std::string& bins_path) {
    const RotationDataset dataset = read_rotation_csv(data_path);
    if (dataset.records.size() < 2) {
        throw ParseError(data_path + ": need at least 2 observations");
    }
    const So3Kind kind = parse_so3_kind(dist);
    const auto grid = shared_so3_grid(level);
    const auto obs = dataset.observations();

    Mat3 a;
    if (!param_path.empty()) {
        const ParamFile p = read_param_json(param_path);
        if (!p.a) throw ParseError(param_path + ": needs key \"A\"");
        a = *p.a;
    } else {
        FitConfig config;
        config.kind = kind;
        config.level = level;
        a = fit_mle(obs, config, *grid).final_a;
    }

    const auto profile =
        gradient_magnitude_profile(kind, So3Param(a), obs, *grid);

    std::ofstream out = open_out(out_path);
    out << "id,error_deg,grad_norm\n";
    for (std::size_t i = 0; i < profile.size(); ++i) {
        out << dataset.records[i].id << ',' << format_g(profile[i].error_degrees)
            << ',' << format_g(profile[i].gradient_norm) << "\n";
    }

    // 2-degree bins over [0, 180]
    constexpr int kBins = 90;
    std::vector<int> count(kBins, 0);
    std::vector<double> grad_sum(kBins, 0.0);
    double total_grad = 0.0;
    for (const auto& p : profile) {
        int b = static_cast<int>(p.error_degrees / 2.0);
        b = std::clamp(b, 0, kBins - 1);
        count[b] += 1;
        grad_sum[b] += p.gradient_norm;
        total_grad += p.gradient_norm;
    }
    std::ofstream bins = open_out(bins_path);
    bins << "bin_lo_deg,bin_hi_deg,count,population_share,grad_sum,grad_share,"
            "grad_mean\n";
    const double n_obs = static_cast<double>(profile.size());
    for (int b = 0; b < kBins; ++b) {
        const double pop_share = count[b] / n_obs;
        const double grad_share = total_grad > 0.0 ? grad_sum[b] / total_grad : 0.0;
        const double grad_mean = count[b] > 0 ? grad_sum[b] / count[b] : 0.0;
        bins << 2 * b << ',' << 2 * (b + 1) << ',' << count[b] << ','
             << format_g(pop_share) << ',' << format_g(grad_sum[b]) << ','
             << format_g(grad_share) << ',' << format_g(grad_mean) << "\n";
    }
    return kExitOk;
}

// --- entropy ------------------------------------------------------------

int cmd_entropy(const std::vector<double>& s_values, int trials, int n,
                const std::string& dist, int level, std::uint64_t seed, int jobs,
                const std::string& out_path) {
    if (s_values.empty()) throw ParseError("need at least one --s value");
    const So3Kind kind = parse_so3_kind(dist);
    const auto grid = shared_so3_grid(level);

    struct Row {
        double s, entropy, error;
    };
    std::vector<std::vector<Row>> rows(s_values.size(),
                                       std::vector<Row>(trials));
    for (std::size_t gi = 0; gi < s_values.size(); ++gi) {
        const double s = s_values[gi];
        parallel_for(jobs, trials, [&, gi, s](int t) {
            const RotationDataset dataset = make_dataset(seed + t, n, s, 0.0);
            FitConfig config;
            config.kind = kind;
            config.level = level;
            const FitReport report = fit_mle(dataset.observations(), config, *grid);
            const double h = entropy(kind, So3Param(report.final_a), *grid);
            const double err = to_degrees(
                geodesic_distance(report.mode, *dataset.ground_truth));
            rows[gi][t] = {s, h, err};
        });
    }

    std::ofstream out = open_out(out_path);
    out << "s,seed,entropy,mode_error_deg\n";
    for (std::size_t gi = 0; gi < s_values.size(); ++gi) {
        for (int t = 0; t < trials; ++t) {
            out << format_g(rows[gi][t].s) << ',' << (seed + t) << ','
                << format_g(rows[gi][t].entropy) << ','
                << format_g(rows[gi][t].error) << "\n";
        }
    }

    if (s_values.size() >= 2) {
        // Paired comparison between the highest- and lowest-concentration groups.
        std::size_t lo_s = 0, hi_s = 0;
        for (std::size_t gi = 1; gi < s_values.size(); ++gi) {
            if (s_values[gi] < s_values[lo_s]) lo_s = gi;
            if (s_values[gi] > s_values[hi_s]) hi_s = gi;
        }
        int low_entropy_wins = 0;
        for (int t = 0; t < trials; ++t) {
            if (rows[hi_s][t].error <= rows[lo_s][t].error) ++low_entropy_wins;
        }
        std::cout << "entropy(s=" << s_values[hi_s] << ") median "
                  << format_g(median([&] {
                         std::vector<double> v;
                         for (auto& r : rows[hi_s]) v.push_back(r.entropy);
                         return v;
                     }()))
                  << " vs entropy(s=" << s_values[lo_s] << ") median "
                  << format_g(median([&] {
                         std::vector<double> v;
                         for (auto& r : rows[lo_s]) v.push_back(r.entropy);
                         return v;
                     }()))
                  << "; low-entropy error wins "
                  << format_g(static_cast<double>(low_entropy_wins) / trials)
                  << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rotation-distribution toolkit: equivolumetric grids, "
                 "densities, MLE fitting, and robustness experiments"};
    app.require_subcommand(1);

    int level = 3;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out_path;
    app.add_option("--level", level, "grid level (0-5)")->capture_default_str();
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--jobs", jobs, "parallel trials")->capture_default_str();
    app.add_option("--out", out_path, "output path");

    auto* grid_cmd = app.add_subcommand("grid", "write a rotation grid to disk");
    std::string grid_format = "bin";
    grid_cmd->add_option("--format", grid_format, "bin|csv")->capture_default_str();

    auto* density_cmd =
        app.add_subcommand("density", "evaluate density at query rotations");
    std::string dist = "rl", param_path, query_path;
    density_cmd->add_option("--dist", dist, "rl|mf|ql|bingham")
        ->capture_default_str();
    density_cmd->add_option("--param", param_path, "JSON parameter file")
        ->required();
    density_cmd->add_option("--queries", query_path, "rotation CSV")->required();

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    int n = 500;
    double s = 10.0, fraction = 0.0;
    std::string synth_format = "rotmat9";
    synth_cmd->add_option("-n,--n", n, "dataset size")->capture_default_str();
    synth_cmd->add_option("-s,--concentration", s, "inlier concentration")
        ->capture_default_str();
    synth_cmd->add_option("-f,--fraction", fraction, "outlier fraction")
        ->capture_default_str();
    synth_cmd->add_option("--format", synth_format, "rotmat9|quat_wxyz")
        ->capture_default_str();

    auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit");
    std::string data_path, init = "spread", init_param;
    double step = 1.0, tol = 1e-4;
    int iters = 300;
    fit_cmd->add_option("--data", data_path, "rotation CSV")->required();
    fit_cmd->add_option("--dist", dist, "rl|mf")->capture_default_str();
    fit_cmd->add_option("--step", step, "initial step size")->capture_default_str();
    fit_cmd->add_option("--iters", iters, "max iterations")->capture_default_str();
    fit_cmd->add_option("--tol", tol, "gradient tolerance")->capture_default_str();
    fit_cmd->add_option("--init", init, "zero|spread|file")->capture_default_str();
    fit_cmd->add_option("--init-param", init_param, "JSON A for --init file");

    auto* compare_cmd =
        app.add_subcommand("compare", "robustness table across outlier fractions");
    int trials = 50;
    std::vector<double> fractions = {0.0, 0.01, 0.05, 0.10, 0.30};
    compare_cmd->add_option("--trials", trials, "seeded trials per fraction")
        ->capture_default_str();
    compare_cmd->add_option("--fractions", fractions, "outlier fractions")
        ->delimiter(',');
    compare_cmd->add_option("-n,--n", n, "dataset size")->capture_default_str();
    compare_cmd->add_option("-s,--concentration", s, "inlier concentration")
        ->capture_default_str();

    auto* grad_cmd = app.add_subcommand(
        "gradprofile", "per-observation gradient magnitude vs error");
    std::string bins_path;
    grad_cmd->add_option("--data", data_path, "rotation CSV")->required();
    grad_cmd->add_option("--dist", dist, "rl|mf")->capture_default_str();
    grad_cmd->add_option("--param", param_path,
                         "JSON A (fit from the data when omitted)");
    grad_cmd->add_option("--bins", bins_path, "binned histogram CSV")->required();

    auto* entropy_cmd = app.add_subcommand(
        "entropy", "entropy vs error across concentration groups");
    std::vector<double> s_values = {2.0, 20.0};
    entropy_cmd->add_option("--s-values", s_values, "concentration groups")
        ->delimiter(',');
    entropy_cmd->add_option("--trials", trials, "seeded trials per group")
        ->capture_default_str();
    entropy_cmd->add_option("-n,--n", n, "dataset size")->capture_default_str();
    entropy_cmd->add_option("--dist", dist, "rl|mf")->capture_default_str();

    for (CLI::App* sub : {grid_cmd, density_cmd, synth_cmd, fit_cmd, compare_cmd,
                          grad_cmd, entropy_cmd}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    try {
        if (grid_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("grid: --out is required");
            return cmd_grid(level, out_path, grid_format);
        }
        if (density_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("density: --out is required");
            return cmd_density(dist, param_path, level, query_path, out_path);
        }
        if (synth_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("synth: --out is required");
            return cmd_synth(seed, n, s, fraction, synth_format, out_path);
        }
        if (fit_cmd->parsed()) {
            return cmd_fit(data_path, dist, level, step, iters, tol, init,
                           init_param, out_path);
        }
        if (compare_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("compare: --out is required");
            return cmd_compare(trials, fractions, n, s, level, seed, jobs,
                               out_path);
        }
        if (grad_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("gradprofile: --out is required");
            return cmd_gradprofile(data_path, dist, level, param_path, out_path,
                                   bins_path);
        }
        if (entropy_cmd->parsed()) {
            if (out_path.empty()) throw ParseError("entropy: --out is required");
            return cmd_entropy(s_values, trials, n, dist, level, seed, jobs,
                               out_path);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InvalidResolution& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NoProgress& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
