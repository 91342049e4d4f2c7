#include "opal/run.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "opal/checkpoint.hpp"
#include "opal/split.hpp"

namespace opal {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kMagic[8] = {'O', 'P', 'A', 'L', 'R', 'U', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > s.size()) throw CheckpointError("truncated run checkpoint");
        T v;
        std::memcpy(&v, s.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        if (pos + n > s.size()) throw CheckpointError("truncated run checkpoint");
        auto out = s.substr(pos, n);
        pos += n;
        return out;
    }
};

json checkpoint_metric_json(const CheckpointMetric& c) {
    return {{"fraction", c.fraction}, {"labeled", c.labeled}, {"epoch", c.epoch}, {"accuracy", c.accuracy},
            {"kappa", c.kappa}};
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
MeanStd mean_std_from_json(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

std::vector<int> fold_order(const RunConfig& config) {
    if (!config.run_folds.empty()) return config.run_folds;
    std::vector<int> all(static_cast<std::size_t>(config.folds));
    for (int f = 0; f < config.folds; ++f) all[static_cast<std::size_t>(f)] = f;
    return all;
}

fs::path model_path(const RunPaths& paths, int fold, int net) {
    return paths.root / "models" / ("fold" + std::to_string(fold) + "_net" + std::to_string(net) + ".bin");
}

// Shared driver for fresh and resumed runs.
class Driver {
public:
    Driver(RunConfig config, RunPaths paths, const Dataset& ds, SplitPlan plan, EventLog log, RunOptions options)
        : config_(std::move(config)), paths_(std::move(paths)), ds_(ds), plan_(std::move(plan)),
          log_(std::move(log)), options_(std::move(options)) {
        if (options_.oracle == OracleMode::Interactive) {
            if (!options_.channel) options_.channel = std::make_shared<QueryChannel>(ds_.num_classes());
            oracle_ = std::make_unique<InteractiveOracle>(options_.channel, config_.oracle_timeout);
        } else {
            oracle_ = std::make_unique<SimulatedOracle>(ds_);
        }
    }

    RunReport run(std::vector<FoldResult> completed, std::optional<FoldState> current) {
        completed_ = std::move(completed);
        const auto n_active = config_.n_active.resolve(ds_.size());
        for (int f : fold_order(config_)) {
            if (std::any_of(completed_.begin(), completed_.end(), [&](const FoldResult& r) { return r.fold == f; }))
                continue;
            const Fold& fold = plan_.folds.at(static_cast<std::size_t>(f));
            TrainerHooks hooks;
            hooks.oracle = oracle_.get();
            hooks.log = &log_;
            hooks.observer = options_.observer;
            hooks.status = options_.status;
            hooks.checkpoint = [this](const FoldState& s) { save(&s); };
            if (config_.snapshots) hooks.snapshot_dir = paths_.snapshots();
            FoldTrainer trainer(config_, ds_, fold, f, hooks);

            FoldState state;
            if (current && current->fold == f) {
                state = std::move(*current);
                current.reset();
                check_step_plan(trainer, state);
            } else {
                state = trainer.initial_state(n_active);
            }
            const auto outcome = trainer.run(state);
            if (outcome == FoldTrainer::Outcome::Halted) return {RunOutcome::Halted, std::nullopt};
            if (outcome == FoldTrainer::Outcome::Waiting) return {RunOutcome::Waiting, std::nullopt};

            FoldResult r;
            r.fold = f;
            r.accuracy = *state.final_accuracy;
            r.kappa = *state.final_kappa;
            r.labeled = state.store.labeled_count();
            r.c_active = state.c_active;
            r.checkpoints = state.checkpoints;
            if (config_.baseline) {
                r.baseline = train_supervised_baseline(config_, ds_, fold, f, r.labeled);
                log_.append({{"type", "metrics"},
                             {"fold", f},
                             {"baseline", true},
                             {"labeled", r.baseline->labeled},
                             {"accuracy", r.baseline->accuracy},
                             {"kappa", r.baseline->kappa}});
            }
            for (int i = 0; i < 2; ++i)
                save_network(model_path(paths_, f, i + 1), state.nets[i].params, state.nets[i].optimizer);
            completed_.push_back(r);
            save(nullptr);
        }
        auto results = summarize(paths_.root.filename().string(), completed_, config_.checkpoint_fractions);
        log_.append({{"type", "metrics"},
                     {"summary", true},
                     {"folds", completed_.size()},
                     {"accuracy", mean_std_json(results.accuracy)},
                     {"kappa", mean_std_json(results.kappa)}});
        write_file_atomic(paths_.results(), results.to_json().dump(2) + "\n");
        if (options_.finished) options_.finished(results);
        return {RunOutcome::Done, results};
    }

private:
    void save(const FoldState* state) {
        json ev{{"type", "checkpoint"}};
        if (state) {
            ev["fold"] = state->fold;
            ev["epoch"] = state->epoch;
            ev["phase"] = to_string(state->phase);
        } else {
            ev["folds_completed"] = completed_.size();
        }
        log_.append(ev);
        RunCheckpoint cp;
        cp.config_text = config_.to_text();
        cp.completed = completed_;
        if (state) cp.fold = *state;
        cp.event_bytes = log_.bytes();
        cp.event_lines = log_.lines();
        write_file_atomic(paths_.checkpoint(), serialize_run_checkpoint(cp));
    }

    void check_step_plan(const FoldTrainer& trainer, const FoldState& state) const {
        const auto fresh = trainer.initial_state(state.n_active);
        if (fresh.total_steps != state.total_steps)
            throw CheckpointError("step plan changed since the checkpoint (" + std::to_string(state.total_steps) +
                                  " vs " + std::to_string(fresh.total_steps) + ")");
        for (const auto& net : state.nets)
            if (net.optimizer.total_steps != state.total_steps)
                throw CheckpointError("optimizer step plan does not match the fold state");
    }

    RunConfig config_;
    RunPaths paths_;
    const Dataset& ds_;
    SplitPlan plan_;
    EventLog log_;
    RunOptions options_;
    std::unique_ptr<Oracle> oracle_;
    std::vector<FoldResult> completed_;
};

void save_split(const RunPaths& paths, const SplitPlan& plan) {
    write_file_atomic(paths.split(), to_json(plan).dump() + "\n");
}

} // namespace

json FoldResult::to_json() const {
    json cps = json::array();
    for (const auto& c : checkpoints) cps.push_back(checkpoint_metric_json(c));
    json j{{"fold", fold},         {"accuracy", accuracy}, {"kappa", kappa},
           {"labeled", labeled},   {"c_active", c_active}, {"checkpoints", cps}};
    if (baseline)
        j["baseline"] = {{"accuracy", baseline->accuracy}, {"kappa", baseline->kappa}, {"labeled", baseline->labeled}};
    return j;
}

FoldResult FoldResult::from_json(const json& j) {
    FoldResult r;
    r.fold = j.at("fold").get<int>();
    r.accuracy = j.at("accuracy").get<double>();
    r.kappa = j.at("kappa").get<double>();
    r.labeled = j.at("labeled").get<std::size_t>();
    r.c_active = j.at("c_active").get<std::size_t>();
    for (const auto& c : j.at("checkpoints"))
        r.checkpoints.push_back({c.at("fraction").get<double>(), c.at("labeled").get<std::size_t>(),
                                 c.at("epoch").get<int>(), c.at("accuracy").get<double>(),
                                 c.at("kappa").get<double>()});
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        r.baseline = BaselineResult{b.at("accuracy").get<double>(), b.at("kappa").get<double>(),
                                    b.at("labeled").get<std::size_t>()};
    }
    return r;
}

RunResults summarize(const std::string& run_id, const std::vector<FoldResult>& folds,
                     const std::vector<double>& fractions) {
    RunResults out;
    out.run_id = run_id;
    out.folds = folds;
    std::sort(out.folds.begin(), out.folds.end(), [](const FoldResult& a, const FoldResult& b) { return a.fold < b.fold; });
    std::vector<double> acc, kap, bacc, bkap;
    for (const auto& f : out.folds) {
        acc.push_back(f.accuracy);
        kap.push_back(f.kappa);
        if (f.baseline) {
            bacc.push_back(f.baseline->accuracy);
            bkap.push_back(f.baseline->kappa);
        }
    }
    out.accuracy = mean_std(acc);
    out.kappa = mean_std(kap);
    if (!bacc.empty()) {
        out.baseline_accuracy = mean_std(bacc);
        out.baseline_kappa = mean_std(bkap);
    }
    for (double frac : fractions) {
        CheckpointRow row;
        row.fraction = frac;
        std::vector<double> a, k;
        for (const auto& f : out.folds)
            for (const auto& c : f.checkpoints)
                if (c.fraction == frac) {
                    a.push_back(c.accuracy);
                    k.push_back(c.kappa);
                }
        row.folds = a.size();
        if (!a.empty()) {
            row.accuracy = mean_std(a);
            row.kappa = mean_std(k);
        }
        out.checkpoints.push_back(row);
    }
    return out;
}

json RunResults::to_json() const {
    json folds_j = json::array();
    for (const auto& f : folds) folds_j.push_back(f.to_json());
    json cps = json::array();
    for (const auto& c : checkpoints)
        cps.push_back({{"fraction", c.fraction},
                       {"folds", c.folds},
                       {"accuracy", mean_std_json(c.accuracy)},
                       {"kappa", mean_std_json(c.kappa)}});
    json j{{"run_id", run_id},
           {"folds", folds_j},
           {"accuracy", mean_std_json(accuracy)},
           {"kappa", mean_std_json(kappa)},
           {"checkpoints", cps}};
    if (baseline_accuracy) {
        j["baseline"] = {{"accuracy", mean_std_json(*baseline_accuracy)}, {"kappa", mean_std_json(*baseline_kappa)}};
    }
    return j;
}

RunResults RunResults::from_json(const json& j) {
    RunResults r;
    r.run_id = j.at("run_id").get<std::string>();
    for (const auto& f : j.at("folds")) r.folds.push_back(FoldResult::from_json(f));
    r.accuracy = mean_std_from_json(j.at("accuracy"));
    r.kappa = mean_std_from_json(j.at("kappa"));
    for (const auto& c : j.at("checkpoints"))
        r.checkpoints.push_back({c.at("fraction").get<double>(), c.at("folds").get<std::size_t>(),
                                 mean_std_from_json(c.at("accuracy")), mean_std_from_json(c.at("kappa"))});
    if (j.contains("baseline")) {
        r.baseline_accuracy = mean_std_from_json(j.at("baseline").at("accuracy"));
        r.baseline_kappa = mean_std_from_json(j.at("baseline").at("kappa"));
    }
    return r;
}

std::string RunResults::report() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "run " << run_id << "\n";
    os << "fold  accuracy  kappa    labeled";
    if (baseline_accuracy) os << "  baseline_acc  baseline_kappa";
    os << "\n";
    for (const auto& f : folds) {
        os << f.fold << "     " << f.accuracy << "    " << f.kappa << "   " << f.labeled;
        if (f.baseline) os << "      " << f.baseline->accuracy << "        " << f.baseline->kappa;
        os << "\n";
    }
    os << "mean  " << accuracy.mean << " +- " << accuracy.std << "  kappa " << kappa.mean << " +- " << kappa.std
       << "\n";
    if (baseline_accuracy)
        os << "baseline  " << baseline_accuracy->mean << " +- " << baseline_accuracy->std << "  kappa "
           << baseline_kappa->mean << " +- " << baseline_kappa->std << "\n";
    if (!checkpoints.empty()) {
        os << "labeled  folds  accuracy           kappa\n";
        for (const auto& c : checkpoints) {
            os.precision(0);
            os << c.fraction * 100 << "%       " << c.folds << "      ";
            os.precision(4);
            if (c.folds == 0) {
                os << "-\n";
                continue;
            }
            os << c.accuracy.mean << " +- " << c.accuracy.std << "  " << c.kappa.mean << " +- " << c.kappa.std
               << "\n";
        }
    }
    return os.str();
}

OracleMode oracle_mode_from_string(const std::string& s) {
    if (s == "simulated") return OracleMode::Simulated;
    if (s == "interactive") return OracleMode::Interactive;
    throw std::invalid_argument("oracle must be simulated or interactive, got '" + s + "'");
}

std::string to_string(RunOutcome outcome) {
    switch (outcome) {
    case RunOutcome::Done: return "done";
    case RunOutcome::Halted: return "halted";
    case RunOutcome::Waiting: return "waiting_for_labels";
    }
    return "unknown";
}

std::string serialize_run_checkpoint(const RunCheckpoint& cp) {
    json j;
    j["config"] = cp.config_text;
    j["completed"] = json::array();
    for (const auto& r : cp.completed) j["completed"].push_back(r.to_json());
    j["fold"] = cp.fold ? cp.fold->to_json() : json(nullptr);
    j["event_bytes"] = cp.event_bytes;
    j["event_lines"] = cp.event_lines;
    const auto text = j.dump();

    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out += text;
    put<std::uint32_t>(out, cp.fold ? 2u : 0u);
    if (cp.fold) {
        for (const auto& net : cp.fold->nets) {
            const auto blob = serialize_network(net.params, net.optimizer);
            put<std::uint64_t>(out, blob.size());
            out += blob;
        }
    }
    return out;
}

namespace {

json read_checkpoint_header(Reader& r) {
    if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw CheckpointError("not a run checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw CheckpointError("unsupported run checkpoint version " + std::to_string(version));
    const auto len = r.get<std::uint64_t>();
    try {
        return json::parse(r.bytes(len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt run checkpoint: ") + e.what());
    }
}

} // namespace

RunCheckpoint deserialize_run_checkpoint(const std::string& blob, const Arch& arch) {
    Reader r{blob};
    const auto j = read_checkpoint_header(r);
    RunCheckpoint cp;
    cp.config_text = j.at("config").get<std::string>();
    for (const auto& f : j.at("completed")) cp.completed.push_back(FoldResult::from_json(f));
    cp.event_bytes = j.at("event_bytes").get<std::uint64_t>();
    cp.event_lines = j.at("event_lines").get<std::uint64_t>();
    const auto count = r.get<std::uint32_t>();
    if (j.at("fold").is_null() != (count == 0)) throw CheckpointError("run checkpoint network count mismatch");
    if (count != 0) {
        if (count != 2) throw CheckpointError("run checkpoint must hold two networks");
        std::array<NetState, 2> nets;
        for (auto& net : nets) {
            const auto len = r.get<std::uint64_t>();
            auto ck = deserialize_network(r.bytes(len), arch);
            net.params = std::move(ck.params);
            net.optimizer = std::move(ck.optimizer);
        }
        cp.fold = FoldState::from_json(j.at("fold"), std::move(nets));
    }
    if (r.pos != blob.size()) throw CheckpointError("trailing bytes in run checkpoint");
    return cp;
}

Arch arch_for(const RunConfig& config, const Dataset& dataset) {
    Arch a;
    a.input_dim = dataset.dim();
    a.encoder = config.encoder;
    a.contrastive = config.contrastive_head;
    a.num_classes = static_cast<std::size_t>(dataset.num_classes());
    a.validate();
    return a;
}

Dataset load_run_dataset(const RunConfig& config) {
    return load_dataset(config.dataset, config.format, config.folds);
}

RunCheckpoint load_run_checkpoint(const RunPaths& paths) {
    const auto blob = read_file(paths.checkpoint());
    Reader r{blob};
    const auto config = parse_config(read_checkpoint_header(r).at("config").get<std::string>());
    const auto ds = load_run_dataset(config);
    return deserialize_run_checkpoint(blob, arch_for(config, ds));
}

RunReport start_run(const RunConfig& input, const fs::path& run_dir, RunOptions options) {
    RunConfig config = input;
    config.validate();
    config.dataset = fs::absolute(config.dataset).lexically_normal().string();
    const RunPaths paths{run_dir};
    if (fs::exists(paths.checkpoint()) || fs::exists(paths.events()))
        throw std::runtime_error("run directory " + run_dir.string() + " already holds a run; use resume");
    fs::create_directories(run_dir);
    write_file_atomic(paths.config(), config.to_text());

    const auto ds = load_run_dataset(config);
    for (int f : fold_order(config))
        if (f < 0 || f >= config.folds) throw ConfigError("invalid_value", "run_folds", "fold index out of range");
    auto plan = stratified_split(ds, config.folds, config.labeled_frac, config.seed);
    save_split(paths, plan);
    spdlog::info("run {}: {} samples, {} classes, {} folds", run_dir.string(), ds.size(), ds.num_classes(),
                 config.folds);

    Driver driver(config, paths, ds, std::move(plan), EventLog(paths.events()), std::move(options));
    return driver.run({}, std::nullopt);
}

RunReport resume_run(const fs::path& run_dir, RunOptions options) {
    const RunPaths paths{run_dir};
    if (!fs::exists(paths.checkpoint())) {
        // killed before the first checkpoint: start over from the saved config
        auto config = parse_config(read_file(paths.config()));
        config.halt_after_epoch = 0;
        config.halt_fold = 0;
        const auto ds = load_run_dataset(config);
        auto plan = stratified_split(ds, config.folds, config.labeled_frac, config.seed);
        save_split(paths, plan);
        spdlog::info("no checkpoint in {}; restarting from epoch 0", run_dir.string());
        Driver driver(config, paths, ds, std::move(plan), EventLog(paths.events()), std::move(options));
        return driver.run({}, std::nullopt);
    }
    const auto blob = read_file(paths.checkpoint());
    Reader r{blob};
    auto config = parse_config(read_checkpoint_header(r).at("config").get<std::string>());
    config.halt_after_epoch = 0;
    config.halt_fold = 0;
    const auto ds = load_run_dataset(config);
    auto cp = deserialize_run_checkpoint(blob, arch_for(config, ds));

    auto plan = split_plan_from_json(json::parse(read_file(paths.split())));
    if (!(plan == stratified_split(ds, config.folds, config.labeled_frac, config.seed)))
        throw CheckpointError("split.json does not match the dataset and config");
    spdlog::info("resuming {} with {} completed folds{}", run_dir.string(), cp.completed.size(),
                 cp.fold ? " and fold " + std::to_string(cp.fold->fold) + " at epoch " +
                               std::to_string(cp.fold->epoch)
                         : std::string());

    Driver driver(config, paths, ds, std::move(plan), EventLog::resume(paths.events(), cp.event_bytes, cp.event_lines),
                  std::move(options));
    return driver.run(std::move(cp.completed), std::move(cp.fold));
}

} // namespace opal
