#include "opal/oracle.hpp"

#include <algorithm>

namespace opal {

void QueryChannel::open(int epoch, std::vector<QueryItem> items) {
    {
        std::lock_guard lock(mutex_);
        open_ = true;
        aborted_ = false;
        epoch_ = epoch;
        items_ = std::move(items);
        answers_.clear();
    }
    cv_.notify_all();
}

bool QueryChannel::complete() const {
    return std::all_of(items_.begin(), items_.end(), [&](const QueryItem& q) { return answers_.contains(q.id); });
}

QueryChannel::Submit QueryChannel::submit(const std::map<SampleId, ClassIndex>& labels) {
    std::unique_lock lock(mutex_);
    auto pending = [&](SampleId id) {
        return open_ && std::any_of(items_.begin(), items_.end(), [&](const QueryItem& q) { return q.id == id; });
    };
    for (const auto& [id, label] : labels) {
        if (label < 0 || label >= num_classes_) return Submit::InvalidClass;
    }
    bool any_new = false;
    for (const auto& [id, label] : labels) {
        if (pending(id)) {
            auto it = answers_.find(id);
            if (it == answers_.end()) {
                any_new = true;
            } else if (it->second != label) {
                return Submit::Conflict;
            }
            continue;
        }
        auto h = history_.find(id);
        if (h == history_.end()) return Submit::NotPending;
        if (h->second != label) return Submit::Conflict;
    }
    if (!any_new) return Submit::Duplicate;
    for (const auto& [id, label] : labels) {
        if (pending(id)) answers_.emplace(id, label);
    }
    const bool done = complete();
    lock.unlock();
    if (done) cv_.notify_all();
    return Submit::Accepted;
}

std::optional<std::map<SampleId, ClassIndex>> QueryChannel::wait(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    const bool ok = cv_.wait_for(lock, timeout, [&] { return aborted_ || (open_ && complete()); });
    if (!ok || aborted_ || !open_) return std::nullopt;
    auto answers = answers_;
    for (const auto& [id, label] : answers) history_[id] = label;
    open_ = false;
    items_.clear();
    answers_.clear();
    return answers;
}

void QueryChannel::abort() {
    {
        std::lock_guard lock(mutex_);
        aborted_ = true;
    }
    cv_.notify_all();
}

QueryChannel::View QueryChannel::view() const {
    std::lock_guard lock(mutex_);
    return View{open_, epoch_, items_, answers_};
}

std::string to_string(QueryChannel::Submit s) {
    switch (s) {
    case QueryChannel::Submit::Accepted: return "accepted";
    case QueryChannel::Submit::Duplicate: return "duplicate";
    case QueryChannel::Submit::NotPending: return "not_pending";
    case QueryChannel::Submit::InvalidClass: return "invalid_class";
    case QueryChannel::Submit::Conflict: return "conflict";
    }
    return "unknown";
}

std::optional<OracleAnswer> SimulatedOracle::label(int, const ActiveQuery& query) {
    OracleAnswer a;
    a.answered_by = "simulated";
    for (const auto& item : query.items) a.labels[item.id] = ds_.label_of(item.id);
    return a;
}

std::optional<OracleAnswer> InteractiveOracle::label(int epoch, const ActiveQuery& query) {
    const auto start = std::chrono::steady_clock::now();
    channel_->open(epoch, query.items);
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds_ * 1000.0));
    auto answers = channel_->wait(timeout);
    if (!answers) return std::nullopt;
    OracleAnswer a;
    a.labels = std::move(*answers);
    a.answered_by = "interactive";
    a.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return a;
}

} // namespace opal
