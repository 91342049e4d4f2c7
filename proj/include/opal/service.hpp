#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "opal/oracle.hpp"
#include "opal/run.hpp"
#include "opal/trainer.hpp"

namespace opal {

// Latest view of a run, fed by the training thread and read by HTTP
// handlers. Holds only what the API may show: no ground truth.
class StatusHub {
public:
    explicit StatusHub(std::string run_id, std::size_t history_limit = 2000);

    void update(const StatusUpdate& u);
    void finish(const RunResults& results);
    void set_outcome(RunOutcome outcome);

    const std::string& run_id() const { return run_id_; }
    // `channel` (may be null) hides items that were already answered.
    nlohmann::json status(const QueryChannel* channel) const;
    nlohmann::json queries(const QueryChannel* channel) const;
    nlohmann::json metrics() const;
    std::optional<std::filesystem::path> projection(int network) const;

private:
    nlohmann::json open_items(const QueryChannel* channel) const;

    std::string run_id_;
    std::size_t history_limit_;
    mutable std::mutex mutex_;
    std::optional<StatusUpdate> last_;
    std::deque<nlohmann::json> history_;
    std::uint64_t epochs_completed_ = 0;
    std::optional<nlohmann::json> results_;
    std::optional<RunOutcome> outcome_;
};

// GET /status, GET /queries, POST /labels, GET /projection?network=1|2,
// GET /metrics. Every endpoint takes an optional ?run= that must match.
class ApiServer {
public:
    ApiServer(std::shared_ptr<StatusHub> hub, std::shared_ptr<QueryChannel> channel);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Binds (port 0 picks a free one), starts the listener thread and
    // returns the bound port.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace opal
