#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/selection.hpp"

namespace opal {

// Hand-off point between the training loop and label submitters. At most
// one query is open at a time. Answers are remembered per (epoch, id) so a
// repeated submission of the same label is acknowledged without effect.
class QueryChannel {
public:
    enum class Submit { Accepted, Duplicate, NotPending, InvalidClass, Conflict };

    struct View {
        bool open = false;
        int epoch = 0;
        std::vector<QueryItem> items;
        std::map<SampleId, ClassIndex> answered;  // answers received so far for the open query
    };

    explicit QueryChannel(int num_classes) : num_classes_(num_classes) {}

    void open(int epoch, std::vector<QueryItem> items);
    // Checks every pair before applying any of them.
    Submit submit(const std::map<SampleId, ClassIndex>& labels);
    Submit submit(SampleId id, ClassIndex label) { return submit(std::map<SampleId, ClassIndex>{{id, label}}); }

    // Blocks until every pending id is answered (returns the answers and
    // closes the query), the timeout passes, or abort() is called.
    std::optional<std::map<SampleId, ClassIndex>> wait(std::chrono::milliseconds timeout);
    void abort();
    View view() const;
    int num_classes() const { return num_classes_; }

private:
    bool complete() const;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    int num_classes_;
    bool open_ = false;
    bool aborted_ = false;
    int epoch_ = 0;
    std::vector<QueryItem> items_;
    std::map<SampleId, ClassIndex> answers_;
    std::map<SampleId, ClassIndex> history_;  // answers of closed queries
};

std::string to_string(QueryChannel::Submit s);

struct OracleAnswer {
    std::map<SampleId, ClassIndex> labels;
    std::string answered_by;
    double latency_seconds = 0.0;
};

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual bool interactive() const = 0;
    // Empty when no answer arrived (timeout or abort).
    virtual std::optional<OracleAnswer> label(int epoch, const ActiveQuery& query) = 0;
};

// Answers from the hidden ground truth, instantly.
class SimulatedOracle final : public Oracle {
public:
    explicit SimulatedOracle(const Dataset& ds) : ds_(ds) {}
    bool interactive() const override { return false; }
    std::optional<OracleAnswer> label(int epoch, const ActiveQuery& query) override;

private:
    const Dataset& ds_;
};

// Publishes the query on a channel and waits for a human to answer it.
class InteractiveOracle final : public Oracle {
public:
    InteractiveOracle(std::shared_ptr<QueryChannel> channel, double timeout_seconds)
        : channel_(std::move(channel)), timeout_seconds_(timeout_seconds) {}
    bool interactive() const override { return true; }
    std::optional<OracleAnswer> label(int epoch, const ActiveQuery& query) override;
    QueryChannel& channel() { return *channel_; }

private:
    std::shared_ptr<QueryChannel> channel_;
    double timeout_seconds_;
};

} // namespace opal
