#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/config.hpp"
#include "opal/dataset.hpp"
#include "opal/event_log.hpp"
#include "opal/label_store.hpp"
#include "opal/losses.hpp"
#include "opal/network.hpp"
#include "opal/optimizer.hpp"
#include "opal/oracle.hpp"
#include "opal/rng.hpp"
#include "opal/selection.hpp"
#include "opal/split.hpp"

namespace opal {

// A loss went non-finite; the run cannot continue with these settings.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Phase { Warmup, Main, WaitingForLabels, Done };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& s);

// True at epoch w + 1 and at every later epoch divisible by e_int.
bool interval_due(int epoch, int w_epochs, int e_int);

// Softmax of both networks' logits, averaged; argmax with ties to the lowest
// class index.
std::vector<ClassIndex> ensemble_predict(const NetworkParams& net1, const NetworkParams& net2, const Matrix& x);
ClassIndex ensemble_label(std::span<const double> pv1, std::span<const double> pv2);

struct NetState {
    NetworkParams params;
    OptimizerState optimizer;
    Rng rng;  // augmentation draws
};

// An interval that has produced its queries but not yet received labels.
struct PendingInterval {
    int epoch = 0;
    std::array<Matrix, 2> coords;              // rows follow LabelStore::all_ids()
    std::array<PropagationResult, 2> props;
    std::array<std::vector<KlSample>, 2> kl;
    ActiveQuery query;                         // already cut to the remaining budget
    std::vector<std::string> warnings;
    bool query_sent = false;     // oracle_query event already logged
    bool barrier_saved = false;  // checkpoint taken at the label barrier
};

struct CheckpointMetric {
    double fraction = 0.0;
    std::size_t labeled = 0;
    int epoch = 0;
    double accuracy = 0.0;
    double kappa = 0.0;
};

struct FoldState {
    int fold = 0;
    int epoch = 0;  // last completed epoch
    Phase phase = Phase::Warmup;
    std::size_t c_active = 0;
    std::size_t n_active = 0;
    std::uint64_t total_steps = 0;
    LabelStore store;
    std::array<NetState, 2> nets;
    Rng batch_rng;
    std::array<PseudoLabelSet, 2> pl;  // pl[i] was built from network i + 1
    std::optional<PendingInterval> pending;
    std::vector<CheckpointMetric> checkpoints;
    std::optional<double> final_accuracy;
    std::optional<double> final_kappa;

    nlohmann::json to_json() const;  // everything except network tensors
    static FoldState from_json(const nlohmann::json& j, std::array<NetState, 2> nets);
};

// What one optimizer step touched; used by tests to check the wiring.
struct StepRecord {
    int fold = 0;
    int epoch = 0;
    int network = 0;  // 1 or 2
    bool warmup = false;
    bool evaluated_cl = false;
    bool evaluated_s = false;
    bool evaluated_ssl = false;
    int pl_source = 0;  // network whose pseudo-labels fed the ssl term
    std::vector<SampleId> labeled_batch;
    std::vector<SampleId> pl_batch;
    LossBreakdown loss;
};

struct IntervalRecord {
    int fold = 0;
    int epoch = 0;
    std::size_t c_active_before = 0;
    std::size_t c_active_after = 0;
    bool oracle_called = false;
    std::array<PseudoLabelSet, 2> pl;
};

class TrainerObserver {
public:
    virtual ~TrainerObserver() = default;
    virtual void on_step(const StepRecord&) {}
    virtual void on_interval(const IntervalRecord&) {}
    // Lets tests replace the pseudo-label sets right after an interval.
    virtual void adjust_pseudo_labels(int /*fold*/, int /*epoch*/, std::array<PseudoLabelSet, 2>& /*pl*/) {}
};

// Status pushed to whoever serves the run (HTTP hub, CLI progress).
struct StatusUpdate {
    int fold = 0;
    int epoch = 0;
    Phase phase = Phase::Warmup;
    std::size_t c_active = 0;
    std::size_t n_active = 0;
    std::size_t labeled = 0;
    nlohmann::json pending = nlohmann::json::array();  // id, v, payload_ref, coords
    std::optional<nlohmann::json> epoch_summary;
    std::array<std::optional<std::filesystem::path>, 2> projection_csv;
};

struct TrainerHooks {
    Oracle* oracle = nullptr;
    EventLog* log = nullptr;
    TrainerObserver* observer = nullptr;
    std::function<void(const StatusUpdate&)> status;
    // Persists the state; called every checkpoint_every epochs and once at
    // each label barrier.
    std::function<void(const FoldState&)> checkpoint;
    std::filesystem::path snapshot_dir;  // empty: no snapshots
};

// Snapshot file of one network at one interval epoch.
std::filesystem::path snapshot_path(const std::filesystem::path& dir, int fold, int epoch, int network,
                                    const std::string& kind);

// Upper bound on optimizer steps per network, fixed at run start.
std::uint64_t planned_total_steps(const RunConfig& config, std::size_t seed_labeled, std::size_t unlabeled,
                                  std::size_t n_active, int num_classes);

class FoldTrainer {
public:
    enum class Outcome { Done, Halted, Waiting };

    FoldTrainer(const RunConfig& config, const Dataset& dataset, const Fold& fold, int fold_index,
                TrainerHooks hooks);

    FoldState initial_state(std::size_t n_active) const;
    Outcome run(FoldState& state);

    Arch arch() const;
    // Accuracy and kappa of the ensemble on the fold's test part.
    std::pair<double, double> evaluate(const FoldState& state) const;

private:
    void warmup_epoch(FoldState& state, int epoch, nlohmann::json& summary);
    void main_epoch(FoldState& state, int epoch, nlohmann::json& summary);
    void start_interval(FoldState& state, int epoch);
    bool finish_interval(FoldState& state);
    void record_checkpoint_metrics(FoldState& state, int epoch, bool final);
    // Written when the interval starts (queried ids marked) and rewritten
    // once the pseudo-labels are chosen.
    void write_snapshots(const FoldState& state, const PendingInterval& p, bool final) const;
    std::optional<std::filesystem::path> latest_projection(const FoldState& state, int network) const;
    void emit(nlohmann::json event) const;
    void publish(const FoldState& state, std::optional<nlohmann::json> summary = std::nullopt) const;
    nlohmann::json pending_items(const FoldState& state) const;

    const RunConfig& config_;
    const Dataset& dataset_;
    const Fold& fold_;
    int fold_index_;
    TrainerHooks hooks_;
    std::vector<SampleId> train_ids_;
    Matrix train_x_;
    Matrix test_x_;
    std::vector<ClassIndex> test_y_;
};

// Supervised-only reference: one network with the same architecture,
// trained with the cross-entropy term alone on a stratified random labeled
// subset of `labeled_count` training ids for the same number of epochs.
struct BaselineResult {
    double accuracy = 0.0;
    double kappa = 0.0;
    std::size_t labeled = 0;
};
BaselineResult train_supervised_baseline(const RunConfig& config, const Dataset& dataset, const Fold& fold,
                                         int fold_index, std::size_t labeled_count);

// Stratified random subset: per-class share by largest remainder, at least
// one per class present.
std::vector<SampleId> stratified_subset(const std::vector<SampleId>& ids, const Dataset& dataset, std::size_t count,
                                        Rng& rng);

nlohmann::json to_json(const PropagationResult& prop);
PropagationResult propagation_from_json(const nlohmann::json& j);

} // namespace opal
