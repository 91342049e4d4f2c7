#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include "opal/checkpoint.hpp"
#include "opal/config.hpp"
#include "opal/event_log.hpp"
#include "opal/oracle.hpp"
#include "opal/run.hpp"
#include "support/tiny_run.hpp"

using namespace opal;
using opal::testing::scratch_dir;
using opal::testing::tiny_config;
using opal::testing::tiny_dataset;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Recorder : TrainerObserver {
    std::vector<StepRecord> steps;
    std::vector<IntervalRecord> intervals;
    void on_step(const StepRecord& r) override { steps.push_back(r); }
    void on_interval(const IntervalRecord& r) override { intervals.push_back(r); }
};

// Forces disjoint pseudo-label pools so the consumer of each one is visible.
struct DisjointPools : Recorder {
    std::map<int, std::array<std::set<SampleId>, 2>> pools;  // by interval epoch
    void adjust_pseudo_labels(int, int epoch, std::array<PseudoLabelSet, 2>& pl) override {
        std::vector<PseudoLabel> all;
        for (const auto& set : pl)
            for (const auto& e : set.entries) all.push_back(e);
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.id < b.id; });
        all.erase(std::unique(all.begin(), all.end(), [](auto& a, auto& b) { return a.id == b.id; }), all.end());
        for (auto& set : pl) set.entries.clear();
        for (std::size_t k = 0; k < all.size(); ++k) {
            pl[k % 2].entries.push_back(all[k]);
            pools[epoch][k % 2].insert(all[k].id);
        }
    }
};

std::vector<nlohmann::json> events_of(const fs::path& run, const std::string& type) {
    std::vector<nlohmann::json> out;
    for (auto& e : read_events(RunPaths{run}.events()))
        if (e.value("type", "") == type) out.push_back(e);
    return out;
}

} // namespace

TEST_CASE("config text round trips and rejects unknown or repeated keys") {
    RunConfig c = tiny_config("x.csv");
    c.n_active = Budget{0, 0.04};
    c.run_folds = {0, 2};
    CHECK(parse_config(c.to_text()) == c);

    try {
        parse_config("n_epochs = 10\nlearning_rate = 0.1\n");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(e.kind() == "unknown_key");
        CHECK(e.key() == "learning_rate");
    }
    try {
        parse_config("n_epochs = 10\nn_epochs = 12\n");
        FAIL("repeated key accepted");
    } catch (const ConfigError& e) {
        CHECK(e.kind() == "duplicate_key");
        CHECK(e.key() == "n_epochs");
    }
    CHECK_THROWS_AS(parse_config("n_epochs = ten\n"), ConfigError);
    CHECK(parse_config("# comment only\n\nseed = 4 # trailing\n").seed == 4);
    CHECK(parse_config("n_active = 4%\n").n_active.resolve(1000) == 40);
}

TEST_CASE("query channel: duplicates, conflicts and wait") {
    QueryChannel ch(3);
    ch.open(5, {{10, 0.1}, {11, 0.2}});
    CHECK(ch.submit(10, 3) == QueryChannel::Submit::InvalidClass);
    CHECK(ch.submit(99, 0) == QueryChannel::Submit::NotPending);
    CHECK(ch.submit(10, 1) == QueryChannel::Submit::Accepted);
    CHECK(ch.submit(10, 1) == QueryChannel::Submit::Duplicate);
    CHECK(ch.submit(10, 2) == QueryChannel::Submit::Conflict);
    CHECK_FALSE(ch.wait(std::chrono::milliseconds(20)).has_value());

    std::thread answer([&] { ch.submit(11, 2); });
    auto got = ch.wait(std::chrono::milliseconds(2000));
    answer.join();
    REQUIRE(got.has_value());
    CHECK(*got == std::map<SampleId, ClassIndex>{{10, 1}, {11, 2}});
    CHECK_FALSE(ch.view().open);
    // a late re-post of an answered query is still just an ack
    CHECK(ch.submit(11, 2) == QueryChannel::Submit::Duplicate);
    CHECK(ch.submit(11, 0) == QueryChannel::Submit::Conflict);
}

TEST_CASE("event log resume cuts back to the recorded length") {
    auto dir = scratch_dir("eventlog");
    auto path = dir / "events.jsonl";
    std::uint64_t bytes = 0, lines = 0;
    {
        EventLog log(path);
        log.append({{"type", "a"}});
        log.append({{"type", "b"}});
        bytes = log.bytes();
        lines = log.lines();
        log.append({{"type", "c"}});
    }
    {
        std::ofstream torn(path, std::ios::app);
        torn << "{\"type\":\"tor";
    }
    auto log = EventLog::resume(path, bytes, lines);
    log.append({{"type", "d"}});
    auto events = read_events(path);
    REQUIRE(events.size() == 3);
    CHECK(events[2]["type"] == "d");
    CHECK(log.lines() == 3);
}

TEST_CASE("trainer wiring on a tiny run") {
    auto dir = scratch_dir("wiring");
    auto config = tiny_config(tiny_dataset(dir));
    config.run_folds = {0};
    DisjointPools obs;
    RunOptions options;
    options.observer = &obs;
    auto report = start_run(config, dir / "run", options);
    REQUIRE(report.outcome == RunOutcome::Done);

    SUBCASE("warmup steps use the contrastive term alone on seed labels") {
        std::set<SampleId> seeds;
        for (const auto& s : obs.steps) {
            if (s.epoch > config.w_epochs) continue;
            CHECK(s.warmup);
            CHECK(s.evaluated_cl);
            CHECK_FALSE(s.evaluated_s);
            CHECK_FALSE(s.evaluated_ssl);
            CHECK(s.pl_batch.empty());
            seeds.insert(s.labeled_batch.begin(), s.labeled_batch.end());
        }
        const auto split = nlohmann::json::parse(slurp(RunPaths{dir / "run"}.split()));
        const auto seed_count = split["folds"][0]["seed_labeled"].size();
        CHECK(seeds.size() <= seed_count);
        for (const auto& s : obs.steps)
            if (s.epoch > config.w_epochs) {
                CHECK_FALSE(s.warmup);
                CHECK(s.evaluated_s);
                CHECK(s.evaluated_ssl);
            }
    }

    SUBCASE("intervals fire at w+1 and every e_int after") {
        std::vector<int> epochs;
        for (const auto& r : obs.intervals) epochs.push_back(r.epoch);
        CHECK(epochs == std::vector<int>{4, 6, 8, 10, 12});
        for (int e = 1; e <= config.n_epochs; ++e)
            CHECK(interval_due(e, config.w_epochs, config.e_int) ==
                  (std::find(epochs.begin(), epochs.end(), e) != epochs.end()));
    }

    SUBCASE("each network trains on the other network's pseudo-labels") {
        std::size_t checked = 0;
        for (const auto& s : obs.steps) {
            if (s.warmup) continue;
            const int other = 3 - s.network;
            CHECK(s.pl_source == other);
            auto it = obs.pools.upper_bound(s.epoch);
            REQUIRE(it != obs.pools.begin());
            const auto& pool = std::prev(it)->second[static_cast<std::size_t>(other - 1)];
            for (auto id : s.pl_batch) {
                CHECK(pool.contains(id));
                ++checked;
            }
        }
        CHECK(checked > 0);
    }

    SUBCASE("oracle budget is spent exactly, then no more calls") {
        const auto n_active = config.n_active.resolve(150);
        CHECK(obs.intervals.back().c_active_after == n_active);
        bool capped = false;
        for (const auto& r : obs.intervals) {
            CHECK(r.c_active_after <= n_active);
            CHECK(r.c_active_after - r.c_active_before <= config.k_active);
            if (capped) {
                CHECK_FALSE(r.oracle_called);
                CHECK(r.c_active_after == r.c_active_before);
            }
            capped = r.c_active_after == n_active;
            // pseudo-labels keep refreshing after the cap
            CHECK(r.pl[0].size() + r.pl[1].size() > 0);
        }
        CHECK(capped);
        auto queries = events_of(dir / "run", "oracle_query");
        CHECK(queries.size() == 3);
        const auto results = RunResults::from_json(nlohmann::json::parse(slurp(RunPaths{dir / "run"}.results())));
        CHECK(results.folds.at(0).c_active == n_active);
    }
}

TEST_CASE("a killed and resumed run writes the same log and results") {
    auto dir = scratch_dir("resume");
    auto config = tiny_config(tiny_dataset(dir));
    config.run_folds = {0, 1};
    config.snapshots = false;
    REQUIRE(start_run(config, dir / "straight", {}).outcome == RunOutcome::Done);

    for (int halt : {5, 7}) {
        CAPTURE(halt);
        auto killed = config;
        killed.halt_after_epoch = halt;  // 5 is not a checkpoint epoch, 7 comes after a barrier
        killed.halt_fold = 1;
        const auto run = dir / ("killed" + std::to_string(halt));
        CHECK(start_run(killed, run, {}).outcome == RunOutcome::Halted);
        CHECK_FALSE(fs::exists(RunPaths{run}.results()));
        auto report = resume_run(run, {});
        REQUIRE(report.outcome == RunOutcome::Done);
        CHECK(slurp(RunPaths{run}.events()) == slurp(RunPaths{dir / "straight"}.events()));
        auto a = nlohmann::json::parse(slurp(RunPaths{run}.results()));
        auto b = nlohmann::json::parse(slurp(RunPaths{dir / "straight"}.results()));
        a.erase("run_id");
        b.erase("run_id");
        CHECK(a == b);
    }
}

TEST_CASE("start_run refuses a directory that already holds a run") {
    auto dir = scratch_dir("twice");
    auto config = tiny_config(tiny_dataset(dir));
    config.run_folds = {0};
    config.n_epochs = 4;
    REQUIRE(start_run(config, dir / "run", {}).outcome == RunOutcome::Done);
    CHECK_THROWS(start_run(config, dir / "run", {}));
}

TEST_CASE("interactive labels arrive through the channel") {
    auto dir = scratch_dir("interactive");
    auto ds_path = tiny_dataset(dir);
    auto config = tiny_config(ds_path);
    config.run_folds = {0};
    auto ds = load_dataset(ds_path, DatasetFormat::FeatureCsv);
    RunOptions options;
    options.oracle = OracleMode::Interactive;
    options.channel = std::make_shared<QueryChannel>(ds.num_classes());
    auto channel = options.channel;

    std::atomic<bool> stop{false};
    std::size_t answered = 0;
    std::thread human([&] {
        while (!stop) {
            auto view = channel->view();
            if (view.open) {
                for (const auto& item : view.items) {
                    if (view.answered.contains(item.id)) continue;
                    channel->submit(item.id, ds.label_of(item.id));
                    ++answered;
                }
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    });
    auto report = start_run(config, dir / "run", options);
    stop = true;
    human.join();
    REQUIRE(report.outcome == RunOutcome::Done);
    CHECK(answered == config.n_active.resolve(ds.size()));
    for (const auto& e : events_of(dir / "run", "oracle_answer")) {
        CHECK(e["answered_by"] == "interactive");
        CHECK(e.contains("latency"));
    }
}

TEST_CASE("an unanswered query times out into a resumable waiting state") {
    auto dir = scratch_dir("waiting");
    auto config = tiny_config(tiny_dataset(dir));
    config.run_folds = {0};
    config.oracle_timeout = 0.05;
    RunOptions options;
    options.oracle = OracleMode::Interactive;
    auto report = start_run(config, dir / "run", options);
    CHECK(report.outcome == RunOutcome::Waiting);

    auto cp = load_run_checkpoint(RunPaths{dir / "run"});
    REQUIRE(cp.fold.has_value());
    CHECK(cp.fold->phase == Phase::WaitingForLabels);
    REQUIRE(cp.fold->pending.has_value());
    CHECK(cp.fold->pending->epoch == config.w_epochs + 1);
    CHECK(cp.fold->pending->query.items.size() == config.k_active);

    // a second timeout does not log the query twice
    CHECK(resume_run(dir / "run", options).outcome == RunOutcome::Waiting);
    CHECK(events_of(dir / "run", "oracle_query").size() == 1);

    auto done = resume_run(dir / "run", {});
    REQUIRE(done.outcome == RunOutcome::Done);
    CHECK(done.results->folds.at(0).c_active == config.n_active.resolve(150));
}
