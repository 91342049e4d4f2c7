// Command-line front end: train, resume, evaluate, project, export and
// make-blobs. Errors go to stderr as one JSON object.

#include <atomic>
#include <csignal>
#include <thread>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "opal/checkpoint.hpp"
#include "opal/run.hpp"
#include "opal/service.hpp"
#include "opal/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace opal;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitWaiting = 3;

int fail(int code, const std::string& kind, const std::string& message, const std::string& key = "") {
    json err{{"error", kind}, {"message", message}};
    if (!key.empty()) err["key"] = key;
    std::cerr << err.dump() << std::endl;
    return code;
}

struct ServeArgs {
    std::string oracle = "simulated";
    bool serve = false;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool linger = false;
};

void add_serve_options(CLI::App* cmd, ServeArgs& a) {
    cmd->add_option("--oracle", a.oracle, "simulated or interactive")->check(CLI::IsMember({"simulated", "interactive"}));
    cmd->add_flag("--serve", a.serve, "serve the HTTP API while training");
    cmd->add_option("--host", a.host, "HTTP bind address");
    cmd->add_option("--port", a.port, "HTTP port (0 picks a free one)");
    cmd->add_flag("--linger", a.linger, "keep serving after the run ends until interrupted");
}

std::atomic<bool> g_interrupted{false};

// Runs `body` with the optional HTTP server around it and maps the outcome
// to an exit code.
int drive(const fs::path& run_dir, const ServeArgs& a, const std::function<RunReport(RunOptions)>& body) {
    RunOptions options;
    options.oracle = oracle_mode_from_string(a.oracle);
    if (options.oracle == OracleMode::Interactive) {
        // label range comes from the dataset named in the saved config
        const auto config = parse_config(read_file(RunPaths{run_dir}.config()));
        options.channel = std::make_shared<QueryChannel>(load_run_dataset(config).num_classes());
    }
    std::shared_ptr<StatusHub> hub;
    std::unique_ptr<ApiServer> server;
    if (a.serve) {
        hub = std::make_shared<StatusHub>(fs::absolute(run_dir).lexically_normal().filename().string());
        options.status = [hub](const StatusUpdate& u) { hub->update(u); };
        options.finished = [hub](const RunResults& r) { hub->finish(r); };
        server = std::make_unique<ApiServer>(hub, options.channel);
        server->start(a.host, a.port);
    }
    const auto report = body(std::move(options));
    if (hub) hub->set_outcome(report.outcome);
    if (server && a.linger) {
        spdlog::info("run finished ({}); still serving, interrupt to stop", to_string(report.outcome));
        std::signal(SIGINT, [](int) { g_interrupted = true; });
        std::signal(SIGTERM, [](int) { g_interrupted = true; });
        while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
    if (server) server->stop();

    json out{{"outcome", to_string(report.outcome)}, {"run_dir", run_dir.string()}};
    if (report.results) {
        out["accuracy"] = {{"mean", report.results->accuracy.mean}, {"std", report.results->accuracy.std}};
        out["kappa"] = {{"mean", report.results->kappa.mean}, {"std", report.results->kappa.std}};
    }
    std::cout << out.dump() << std::endl;
    switch (report.outcome) {
    case RunOutcome::Done: return 0;
    case RunOutcome::Halted: return 0;
    case RunOutcome::Waiting: return kExitWaiting;
    }
    return kExitError;
}

// Evaluates whatever the run directory holds: the results file when the run
// is over, otherwise the completed folds plus the fold in progress.
int evaluate(const fs::path& run_dir, bool as_json) {
    const RunPaths paths{run_dir};
    RunResults results;
    if (fs::exists(paths.results())) {
        results = RunResults::from_json(json::parse(read_file(paths.results())));
    } else {
        const auto cp = load_run_checkpoint(paths);
        const auto config = parse_config(cp.config_text);
        auto folds = cp.completed;
        if (cp.fold) {
            const auto ds = load_run_dataset(config);
            const auto plan = split_plan_from_json(json::parse(read_file(paths.split())));
            FoldTrainer trainer(config, ds, plan.folds.at(static_cast<std::size_t>(cp.fold->fold)), cp.fold->fold, {});
            const auto [acc, kappa] = trainer.evaluate(*cp.fold);
            FoldResult r;
            r.fold = cp.fold->fold;
            r.accuracy = acc;
            r.kappa = kappa;
            r.labeled = cp.fold->store.labeled_count();
            r.c_active = cp.fold->c_active;
            r.checkpoints = cp.fold->checkpoints;
            folds.push_back(r);
        }
        results = summarize(fs::absolute(run_dir).lexically_normal().filename().string(), folds,
                            config.checkpoint_fractions);
    }
    if (as_json) {
        std::cout << results.to_json().dump(2) << std::endl;
    } else {
        std::cout << results.report();
    }
    return 0;
}

std::optional<fs::path> latest_snapshot(const fs::path& run_dir, int network, std::optional<int> fold) {
    const auto root = RunPaths{run_dir}.snapshots();
    if (!fs::exists(root)) return std::nullopt;
    std::optional<fs::path> best;
    const std::string suffix = "_net" + std::to_string(network) + "_projection.csv";
    for (const auto& dir : fs::directory_iterator(root)) {
        if (fold && dir.path().filename() != "fold" + std::to_string(*fold)) continue;
        for (const auto& f : fs::directory_iterator(dir.path())) {
            const auto name = f.path().filename().string();
            if (!name.ends_with(suffix)) continue;
            // fold directories sort by name, epochs are zero padded
            if (!best || dir.path().filename().string() + name >
                             best->parent_path().filename().string() + best->filename().string())
                best = f.path();
        }
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"opal: active semi-supervised training with optimum-path-forest pseudo-labels"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    // train
    auto* train = app.add_subcommand("train", "start a new run");
    std::string config_path;
    std::string run_dir;
    std::vector<std::string> overrides;
    ServeArgs serve;
    train->add_option("-c,--config", config_path, "config file (key = value lines)")->required();
    train->add_option("-r,--run-dir", run_dir, "directory for all run artifacts")->required();
    train->add_option("--set", overrides, "override a config key: key=value");
    add_serve_options(train, serve);

    // resume
    auto* resume = app.add_subcommand("resume", "continue a run from its last checkpoint");
    resume->add_option("-r,--run-dir", run_dir, "run directory")->required();
    add_serve_options(resume, serve);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "print the accuracy and kappa report of a run");
    bool eval_json = false;
    eval->add_option("-r,--run-dir", run_dir, "run directory")->required();
    eval->add_flag("--json", eval_json, "print JSON instead of the table");

    // project
    auto* project = app.add_subcommand("project", "dump the latest 2D projection snapshot");
    int network = 1;
    std::optional<int> fold;
    std::string out_path;
    project->add_option("-r,--run-dir", run_dir, "run directory")->required();
    project->add_option("--network", network, "1 or 2")->check(CLI::Range(1, 2));
    project->add_option("--fold", fold, "fold (default: latest)");
    project->add_option("-o,--out", out_path, "output file (default: stdout)");

    // export
    auto* exp = app.add_subcommand("export", "write network weights and label state of a run");
    exp->add_option("-r,--run-dir", run_dir, "run directory")->required();
    exp->add_option("-o,--out", out_path, "output directory")->required();

    // make-blobs
    auto* blobs = app.add_subcommand("make-blobs", "write a synthetic Gaussian-blob dataset as feature CSV");
    BlobSpec spec;
    blobs->add_option("-o,--out", out_path, "output CSV")->required();
    blobs->add_option("-n", spec.n, "samples");
    blobs->add_option("-d,--dim", spec.dim, "features");
    blobs->add_option("-k,--classes", spec.classes, "classes");
    blobs->add_option("--spread", spec.center_spread, "std of class centers");
    blobs->add_option("--cluster-std", spec.cluster_std, "within-class std");
    blobs->add_option("--seed", spec.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("opal"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*train) {
            auto config = load_config(config_path);
            for (const auto& o : overrides) {
                const auto eq = o.find('=');
                if (eq == std::string::npos) return fail(kExitConfig, "syntax", "--set expects key=value", o);
                set_config_value(config, o.substr(0, eq), o.substr(eq + 1));
            }
            config.validate();
            fs::create_directories(run_dir);
            if (fs::exists(RunPaths{run_dir}.events()))
                return fail(kExitError, "run_exists", run_dir + " already holds a run; use resume");
            // config.cfg must exist before drive() sizes the label channel
            auto resolved = config;
            resolved.dataset = fs::absolute(config.dataset).lexically_normal().string();
            write_file_atomic(RunPaths{run_dir}.config(), resolved.to_text());
            return drive(run_dir, serve, [&](RunOptions o) { return start_run(config, run_dir, std::move(o)); });
        }
        if (*resume) {
            return drive(run_dir, serve, [&](RunOptions o) { return resume_run(run_dir, std::move(o)); });
        }
        if (*eval) return evaluate(run_dir, eval_json);
        if (*project) {
            const auto path = latest_snapshot(run_dir, network, fold);
            if (!path) return fail(kExitError, "no_projection", "no projection snapshot in " + run_dir);
            const auto text = read_file(*path);
            if (out_path.empty()) {
                std::cout << text;
            } else {
                write_file_atomic(out_path, text);
            }
            return 0;
        }
        if (*exp) {
            const RunPaths paths{run_dir};
            fs::create_directories(out_path);
            json manifest{{"run_dir", run_dir}, {"files", json::array()}};
            if (fs::exists(paths.root / "models")) {
                for (const auto& f : fs::directory_iterator(paths.root / "models")) {
                    fs::copy_file(f.path(), fs::path(out_path) / f.path().filename(),
                                  fs::copy_options::overwrite_existing);
                    manifest["files"].push_back(f.path().filename().string());
                }
            }
            if (fs::exists(paths.checkpoint())) {
                const auto cp = load_run_checkpoint(paths);
                if (cp.fold) {
                    const auto f = cp.fold->fold;
                    for (int i = 0; i < 2; ++i) {
                        const auto name = "fold" + std::to_string(f) + "_net" + std::to_string(i + 1) + "_current.bin";
                        save_network(fs::path(out_path) / name, cp.fold->nets[i].params, cp.fold->nets[i].optimizer);
                        manifest["files"].push_back(name);
                    }
                    const auto name = "fold" + std::to_string(f) + "_labels.json";
                    write_file_atomic(fs::path(out_path) / name, cp.fold->store.to_json().dump() + "\n");
                    manifest["files"].push_back(name);
                }
            }
            if (fs::exists(paths.results())) {
                fs::copy_file(paths.results(), fs::path(out_path) / "results.json", fs::copy_options::overwrite_existing);
                manifest["files"].push_back("results.json");
            }
            write_file_atomic(fs::path(out_path) / "manifest.json", manifest.dump(2) + "\n");
            std::cout << manifest.dump() << std::endl;
            return 0;
        }
        if (*blobs) {
            save_feature_csv(make_blobs(spec), out_path);
            std::cout << json{{"out", out_path}, {"n", spec.n}, {"dim", spec.dim}, {"classes", spec.classes}}.dump()
                      << std::endl;
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail(kExitConfig, e.kind(), e.what(), e.key());
    } catch (const DatasetError& e) {
        return fail(kExitError, "dataset", e.what());
    } catch (const TrainingError& e) {
        return fail(kExitError, "diverged", e.what());
    } catch (const CheckpointError& e) {
        return fail(kExitError, "checkpoint", e.what());
    } catch (const std::exception& e) {
        return fail(kExitError, "runtime", e.what());
    }
    return 0;
}
