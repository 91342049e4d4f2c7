#include "opal/service.hpp"

#include <charconv>
#include <set>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "opal/checkpoint.hpp"

namespace opal {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, status, {{"error", kind}, {"message", message}});
}

std::optional<long long> parse_integer(const std::string& s) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
    return v;
}

} // namespace

StatusHub::StatusHub(std::string run_id, std::size_t history_limit)
    : run_id_(std::move(run_id)), history_limit_(history_limit) {}

void StatusHub::update(const StatusUpdate& u) {
    std::lock_guard lock(mutex_);
    last_ = u;
    if (u.epoch_summary) {
        ++epochs_completed_;
        history_.push_back(*u.epoch_summary);
        while (history_.size() > history_limit_) history_.pop_front();
    }
}

void StatusHub::finish(const RunResults& results) {
    std::lock_guard lock(mutex_);
    results_ = results.to_json();
    outcome_ = RunOutcome::Done;
}

void StatusHub::set_outcome(RunOutcome outcome) {
    std::lock_guard lock(mutex_);
    outcome_ = outcome;
}

json StatusHub::open_items(const QueryChannel* channel) const {
    json items = json::array();
    if (!last_ || last_->phase != Phase::WaitingForLabels) return items;
    std::optional<QueryChannel::View> view;
    if (channel) view = channel->view();
    for (const auto& item : last_->pending) {
        const auto id = item.at("id").get<SampleId>();
        if (view) {
            if (!view->open) continue;
            if (view->answered.contains(id)) continue;
        }
        items.push_back(item);
    }
    return items;
}

json StatusHub::status(const QueryChannel* channel) const {
    std::lock_guard lock(mutex_);
    json j{{"run_id", run_id_}};
    if (!last_) {
        j["phase"] = "STARTING";
        j["pending_queries"] = json::array();
        return j;
    }
    auto items = open_items(channel);
    Phase phase = last_->phase;
    // every pending id answered: the barrier is released even if the trainer
    // has not reported back yet
    if (phase == Phase::WaitingForLabels && items.empty()) phase = Phase::Main;
    j["phase"] = to_string(phase);
    j["fold"] = last_->fold;
    j["epoch"] = last_->epoch;
    j["c_active"] = last_->c_active;
    j["n_active"] = last_->n_active;
    j["labeled"] = last_->labeled;
    j["pending_queries"] = items;
    json tail = json::array();
    const std::size_t from = history_.size() > 5 ? history_.size() - 5 : 0;
    for (std::size_t i = from; i < history_.size(); ++i) tail.push_back(history_[i]);
    j["metrics_tail"] = tail;
    if (outcome_) j["outcome"] = to_string(*outcome_);
    return j;
}

json StatusHub::queries(const QueryChannel* channel) const {
    std::lock_guard lock(mutex_);
    json j{{"run_id", run_id_}, {"items", open_items(channel)}};
    if (last_) {
        j["fold"] = last_->fold;
        j["epoch"] = last_->epoch + 1;  // the interval epoch being prepared
    }
    if (channel) j["num_classes"] = channel->num_classes();
    return j;
}

json StatusHub::metrics() const {
    std::lock_guard lock(mutex_);
    json j{{"run_id", run_id_}, {"epochs_completed", epochs_completed_}};
    j["epoch"] = last_ ? last_->epoch : 0;
    j["history"] = json(history_);
    if (results_) j["results"] = *results_;
    return j;
}

std::optional<std::filesystem::path> StatusHub::projection(int network) const {
    std::lock_guard lock(mutex_);
    if (!last_ || network < 1 || network > 2) return std::nullopt;
    return last_->projection_csv[static_cast<std::size_t>(network - 1)];
}

struct ApiServer::Impl {
    std::shared_ptr<StatusHub> hub;
    std::shared_ptr<QueryChannel> channel;
    httplib::Server server;
    std::thread thread;
    std::mutex submit_mutex;  // one label writer at a time

    bool run_matches(const httplib::Request& req, httplib::Response& res) const {
        if (req.has_param("run") && req.get_param_value("run") != hub->run_id()) {
            send_error(res, 404, "unknown_run", "no run named '" + req.get_param_value("run") + "'");
            return false;
        }
        return true;
    }

    void routes() {
        server.Get("/status", [this](const httplib::Request& req, httplib::Response& res) {
            if (run_matches(req, res)) send_json(res, 200, hub->status(channel.get()));
        });
        server.Get("/queries", [this](const httplib::Request& req, httplib::Response& res) {
            if (run_matches(req, res)) send_json(res, 200, hub->queries(channel.get()));
        });
        server.Get("/metrics", [this](const httplib::Request& req, httplib::Response& res) {
            if (run_matches(req, res)) send_json(res, 200, hub->metrics());
        });
        server.Get("/projection", [this](const httplib::Request& req, httplib::Response& res) {
            if (!run_matches(req, res)) return;
            const auto text = req.has_param("network") ? req.get_param_value("network") : "1";
            const auto network = parse_integer(text);
            if (!network || (*network != 1 && *network != 2)) {
                send_error(res, 400, "bad_request", "network must be 1 or 2");
                return;
            }
            const auto path = hub->projection(static_cast<int>(*network));
            if (!path || !std::filesystem::exists(*path)) {
                send_error(res, 404, "no_projection", "no projection snapshot yet");
                return;
            }
            res.status = 200;
            res.set_content(read_file(*path), "text/csv");
        });
        server.Post("/labels", [this](const httplib::Request& req, httplib::Response& res) { post_labels(req, res); });
    }

    void post_labels(const httplib::Request& req, httplib::Response& res) {
        if (!run_matches(req, res)) return;
        if (!channel) {
            send_error(res, 409, "not_interactive", "this run does not take labels");
            return;
        }
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_json", e.what());
            return;
        }
        if (body.is_object() && body.contains("labels")) body = body.at("labels");
        if (!body.is_object() || body.empty()) {
            send_error(res, 400, "bad_request", "expected a non-empty object mapping id to class index");
            return;
        }
        std::map<SampleId, ClassIndex> labels;
        for (const auto& [key, value] : body.items()) {
            const auto id = parse_integer(key);
            if (!id || *id < 0) {
                send_error(res, 400, "bad_request", "'" + key + "' is not a sample id");
                return;
            }
            if (!value.is_number_integer()) {
                send_error(res, 422, "invalid_class", "class for id " + key + " must be an integer index");
                return;
            }
            const auto c = value.get<long long>();
            if (c < 0 || c >= channel->num_classes()) {
                send_error(res, 422, "invalid_class",
                           "class " + std::to_string(c) + " for id " + key + " is outside [0, " +
                               std::to_string(channel->num_classes()) + ")");
                return;
            }
            labels[static_cast<SampleId>(*id)] = static_cast<ClassIndex>(c);
        }
        std::lock_guard lock(submit_mutex);
        const auto result = channel->submit(labels);
        const auto view = channel->view();
        json ack{{"result", to_string(result)},
                 {"answered", view.answered.size()},
                 {"remaining", view.open ? view.items.size() - view.answered.size() : 0}};
        switch (result) {
        case QueryChannel::Submit::Accepted:
        case QueryChannel::Submit::Duplicate: send_json(res, 200, ack); break;
        case QueryChannel::Submit::InvalidClass: send_error(res, 422, "invalid_class", "class index out of range"); break;
        case QueryChannel::Submit::NotPending:
            send_error(res, 409, "not_pending", "at least one id is not part of the pending query");
            break;
        case QueryChannel::Submit::Conflict:
            send_error(res, 409, "conflict", "a different label was already recorded for one of the ids");
            break;
        }
    }
};

ApiServer::ApiServer(std::shared_ptr<StatusHub> hub, std::shared_ptr<QueryChannel> channel)
    : impl_(std::make_unique<Impl>()) {
    impl_->hub = std::move(hub);
    impl_->channel = std::move(channel);
    impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    spdlog::info("serving run {} on http://{}:{}", impl_->hub->run_id(), host, bound);
    return bound;
}

void ApiServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace opal
