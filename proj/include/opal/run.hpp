#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/config.hpp"
#include "opal/metrics.hpp"
#include "opal/oracle.hpp"
#include "opal/trainer.hpp"

namespace opal {

// Files of one run directory.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.cfg"; }
    std::filesystem::path split() const { return root / "split.json"; }
    std::filesystem::path events() const { return root / "events.jsonl"; }
    std::filesystem::path checkpoint() const { return root / "checkpoint.bin"; }
    std::filesystem::path results() const { return root / "results.json"; }
    std::filesystem::path snapshots() const { return root / "snapshots"; }
};

struct FoldResult {
    int fold = 0;
    double accuracy = 0.0;
    double kappa = 0.0;
    std::size_t labeled = 0;
    std::size_t c_active = 0;
    std::vector<CheckpointMetric> checkpoints;
    std::optional<BaselineResult> baseline;

    nlohmann::json to_json() const;
    static FoldResult from_json(const nlohmann::json& j);
};

struct CheckpointRow {
    double fraction = 0.0;
    std::size_t folds = 0;  // folds that reached this fraction
    MeanStd accuracy;
    MeanStd kappa;
};

struct RunResults {
    std::string run_id;
    std::vector<FoldResult> folds;
    MeanStd accuracy;
    MeanStd kappa;
    std::vector<CheckpointRow> checkpoints;
    std::optional<MeanStd> baseline_accuracy;
    std::optional<MeanStd> baseline_kappa;

    nlohmann::json to_json() const;
    static RunResults from_json(const nlohmann::json& j);
    // Plain-text table: per fold accuracy and kappa, mean +- std, then the
    // labeled-fraction checkpoints.
    std::string report() const;
};

RunResults summarize(const std::string& run_id, const std::vector<FoldResult>& folds,
                     const std::vector<double>& fractions);

enum class OracleMode { Simulated, Interactive };
OracleMode oracle_mode_from_string(const std::string& s);

struct RunOptions {
    OracleMode oracle = OracleMode::Simulated;
    std::shared_ptr<QueryChannel> channel;  // interactive mode; created when empty
    TrainerObserver* observer = nullptr;
    std::function<void(const StatusUpdate&)> status;
    std::function<void(const RunResults&)> finished;
};

enum class RunOutcome { Done, Halted, Waiting };
std::string to_string(RunOutcome outcome);

struct RunReport {
    RunOutcome outcome = RunOutcome::Done;
    std::optional<RunResults> results;  // set when Done
};

// Contents of checkpoint.bin.
struct RunCheckpoint {
    std::string config_text;
    std::vector<FoldResult> completed;
    std::optional<FoldState> fold;  // the fold in progress, with both networks
    std::uint64_t event_bytes = 0;
    std::uint64_t event_lines = 0;
};

std::string serialize_run_checkpoint(const RunCheckpoint& cp);
RunCheckpoint deserialize_run_checkpoint(const std::string& blob, const Arch& arch);
RunCheckpoint load_run_checkpoint(const RunPaths& paths);

// Creates the run directory (which must not hold a run already) and runs
// every configured fold.
RunReport start_run(const RunConfig& config, const std::filesystem::path& run_dir, RunOptions options);

// Continues from checkpoint.bin. The event log is cut back to the length it
// had when the checkpoint was taken, so a resumed run writes the same log as
// an uninterrupted one. The simulated-kill settings in the stored config are
// cleared.
RunReport resume_run(const std::filesystem::path& run_dir, RunOptions options);

// The network architecture implied by a config and dataset.
Arch arch_for(const RunConfig& config, const Dataset& dataset);

Dataset load_run_dataset(const RunConfig& config);

} // namespace opal
