#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dap/driver.hpp"
#include "dap/io.hpp"
#include "dap/verify.hpp"

namespace fs = std::filesystem;
using namespace dap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
    std::string config_path = "config.json";
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool desk_scale = false;
    bool paper_scale = false;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Path to the run configuration JSON");
    cmd->add_option("--out", opts.out_dir, "Output directory (overrides config output_dir)");
    cmd->add_option("--seed", opts.seed, "Override the configured RNG seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_flag("--desk-scale", opts.desk_scale, "Start from the desk-scale preset");
    cmd->add_flag("--paper-scale", opts.paper_scale, "Start from the paper-scale preset");
    cmd->add_option("--threads", opts.threads, "Worker threads for simulation and KDMD fits")
        ->check(CLI::PositiveNumber);
}

config::RunConfig resolve_config(const CommonOpts& opts, bool require_file) {
    config::RunConfig cfg;
    if (opts.desk_scale && opts.paper_scale)
        throw ConfigError("--desk-scale and --paper-scale are mutually exclusive");
    if (fs::exists(opts.config_path)) {
        cfg = config::load_config(opts.config_path);
        if (opts.desk_scale || opts.paper_scale)
            throw ConfigError("preset flags cannot override an existing config file; edit '" +
                              opts.config_path + "' or point --config elsewhere");
    } else if (require_file) {
        throw IoError("config file '" + opts.config_path + "' not found (run `dapred init`)");
    } else {
        cfg = opts.paper_scale ? config::RunConfig::paper_scale() : config::RunConfig::desk_scale();
    }
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    cfg.validate();
    return cfg;
}

int cmd_init(const CommonOpts& opts) {
    config::RunConfig cfg =
        opts.paper_scale ? config::RunConfig::paper_scale() : config::RunConfig::desk_scale();
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    cfg.validate();
    config::save_config(cfg, opts.config_path);
    std::cout << "wrote " << opts.config_path << "\n";
    return kExitOk;
}

int cmd_simulate(const CommonOpts& opts) {
    config::RunConfig cfg = resolve_config(opts, false);
    fs::create_directories(cfg.output_dir);
    fom::SnapshotSet train = driver::simulate_train(cfg, opts.threads);
    io::save_snapshots((fs::path(cfg.output_dir) / "train").string(), train);
    fom::SnapshotSet test = driver::simulate_test(cfg, opts.threads);
    io::save_snapshots((fs::path(cfg.output_dir) / "test").string(), test);
    std::cout << "wrote " << train.states.size() << " training and " << test.states.size()
              << " held-out trajectories under " << cfg.output_dir << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& opts) {
    config::RunConfig cfg = resolve_config(opts, false);
    const fs::path out(cfg.output_dir);
    const std::string train_dir = (out / "train").string();
    if (!fs::exists(fs::path(train_dir) / "manifest.json"))
        throw IoError("training dataset '" + train_dir + "' not found (run `dapred simulate`)");
    fom::SnapshotSet train = io::load_snapshots(train_dir);

    driver::TrainLogs logs;
    pipeline::ModelBundle bundle = driver::train_offline(cfg, train, &logs, opts.threads);
    io::save_bundle((out / "bundle.dapc").string(), bundle);
    io::write_text_file((out / "loss.csv").string(), driver::render_loss_csv(logs));
    std::cout << "wrote " << (out / "bundle.dapc").string() << " (final losses: cae "
              << logs.joint.joint.best_loss << ")\n";
    return kExitOk;
}

int cmd_predict(const CommonOpts& opts, const std::string& queries_path) {
    config::RunConfig cfg = resolve_config(opts, false);
    const fs::path out(cfg.output_dir);
    pipeline::ModelBundle bundle = io::load_bundle((out / "bundle.dapc").string());
    std::vector<pipeline::Query> queries = io::load_queries_csv(queries_path);

    const auto t0 = std::chrono::steady_clock::now();
    auto [pred, flags] = pipeline::predict_online(bundle, queries);
    const auto t1 = std::chrono::steady_clock::now();

    io::write_matrix((out / "predictions.dapt").string(), pred);
    std::vector<std::vector<double>> report;
    for (size_t i = 0; i < queries.size(); ++i)
        report.push_back({queries[i].mu, queries[i].t, static_cast<double>(flags[i])});
    io::write_csv((out / "predict_report.csv").string(), {"mu", "t", "out_of_range"}, report);

    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    std::cout << queries.size() << " queries in " << ms << " ms -> "
              << (out / "predictions.dapt").string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const CommonOpts& opts) {
    config::RunConfig cfg = resolve_config(opts, false);
    const fs::path out(cfg.output_dir);
    pipeline::ModelBundle bundle = io::load_bundle((out / "bundle.dapc").string());
    fom::SnapshotSet test = io::load_snapshots((out / "test").string());

    std::vector<Mat> predicted = driver::predict_trajectories(bundle, test);
    pipeline::Metrics metrics =
        pipeline::compute_metrics(test, predicted, bundle.t_train_end);

    std::vector<double> test_params;
    for (const auto& p : test.parameters) test_params.push_back(p.front());
    io::write_text_file((out / "metrics.csv").string(),
                        driver::render_metrics_csv(metrics, test_params));

    // Probe-point exports: v and w at the left boundary node for each held-out
    // parameter — time traces and the (v, w) phase-plane pair.
    const int half = static_cast<int>(test.states.front().cols()) / 2;
    for (size_t i = 0; i < test.states.size(); ++i) {
        std::vector<std::vector<double>> rows;
        for (size_t j = 0; j < test.times.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            rows.push_back({test.times[j], test.states[i](jj, 0), predicted[i](jj, 0),
                            test.states[i](jj, half), predicted[i](jj, half)});
        }
        char name[32];
        std::snprintf(name, sizeof(name), "probe_%03zu.csv", i);
        io::write_csv((out / name).string(), {"t", "v_ref", "v_pred", "w_ref", "w_pred"}, rows);
    }

    for (size_t f = 0; f < metrics.fields.size(); ++f) {
        const auto& fm = metrics.fields[f];
        std::cout << metrics.field_names[f] << ": eps_mean " << fm.eps_mean << " eps_max "
                  << fm.eps_max << " (train " << fm.eps_mean_train << ", extrap "
                  << fm.eps_mean_extrap << ")\n";
    }
    std::cout << "wrote " << (out / "metrics.csv").string() << "\n";
    return kExitOk;
}

int cmd_verify(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<verify::OracleResult> results = verify::run_all(seed);
    bool all_ok = true;
    for (const auto& r : results) {
        std::printf("%-32s %s  residual %.3e (tol %.1e)%s%s\n", r.name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.worst, r.tolerance,
                    r.detail.empty() ? "" : "  ", r.detail.c_str());
        all_ok = all_ok && r.passed;
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("verify: %s in %.1f s\n", all_ok ? "all oracles passed" : "FAILURES", s);
    return all_ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surrogate modeling via CAE-FFNN with KDMD latent data augmentation"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string queries_path;

    CLI::App* init = app.add_subcommand("init", "Write a default configuration file");
    add_common(init, opts);
    CLI::App* simulate = app.add_subcommand("simulate", "Run the FOM and write datasets");
    add_common(simulate, opts);
    CLI::App* train = app.add_subcommand("train", "Offline stage: train the surrogate");
    add_common(train, opts);
    CLI::App* predict = app.add_subcommand("predict", "Online stage: evaluate queries");
    add_common(predict, opts);
    predict->add_option("queries", queries_path, "CSV with header mu,t")->required();
    CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics against the held-out dataset");
    add_common(evaluate, opts);
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the built-in oracle suite");
    add_common(verify_cmd, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (init->parsed()) return cmd_init(opts);
        if (simulate->parsed()) return cmd_simulate(opts);
        if (train->parsed()) return cmd_train(opts);
        if (predict->parsed()) return cmd_predict(opts, queries_path);
        if (evaluate->parsed()) return cmd_evaluate(opts);
        if (verify_cmd->parsed()) return cmd_verify(opts.seed_set ? opts.seed : 1234);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
