#include "opal/opf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace opal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Tree {
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;
};

// Prim on the complete graph, O(n^2).
Tree minimum_spanning_tree(const Matrix& coords) {
    const std::size_t n = coords.rows();
    Tree t;
    t.adj.resize(n);
    if (n == 0) return t;
    std::vector<double> best(n, kInf);
    std::vector<std::size_t> parent(n, 0);
    std::vector<bool> in(n, false);
    best[0] = 0.0;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t u = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (!in[v] && (u == n || best[v] < best[u])) u = v;
        }
        in[u] = true;
        if (step > 0) {
            t.adj[u].emplace_back(parent[u], best[u]);
            t.adj[parent[u]].emplace_back(u, best[u]);
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (in[v]) continue;
            const double w = arc_length(coords, u, v);
            if (w < best[v]) {
                best[v] = w;
                parent[v] = u;
            }
        }
    }
    return t;
}

} // namespace

RunnerUpMode runner_up_mode_from_string(const std::string& s) {
    if (s == "prototype") return RunnerUpMode::Prototype;
    if (s == "class") return RunnerUpMode::Class;
    throw std::invalid_argument("runner_up must be 'prototype' or 'class', got '" + s + "'");
}

std::string to_string(RunnerUpMode mode) { return mode == RunnerUpMode::Prototype ? "prototype" : "class"; }

const PropagationEntry* PropagationResult::find(SampleId id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const PropagationEntry& e, SampleId v) { return e.id < v; });
    return it != entries.end() && it->id == id ? &*it : nullptr;
}

double confidence(double c, std::optional<double> c_prime) {
    if (c < 0.0) throw std::invalid_argument("confidence: negative cost");
    if (!c_prime) return 1.0;
    if (*c_prime < c) throw std::invalid_argument("confidence: runner-up cost below optimum cost");
    if (*c_prime == 0.0) return 0.5;
    return *c_prime / (c + *c_prime);
}

double arc_length(const Matrix& coords, std::size_t a, std::size_t b) {
    const double dx = coords(a, 0) - coords(b, 0);
    const double dy = coords(a, 1) - coords(b, 1);
    return std::sqrt(dx * dx + dy * dy);
}

std::vector<std::vector<double>> prototype_bottlenecks(const Matrix& coords, std::span<const std::size_t> sources) {
    const std::size_t n = coords.rows();
    const Tree tree = minimum_spanning_tree(coords);
    std::vector<std::vector<double>> out;
    out.reserve(sources.size());
    std::vector<std::size_t> stack;
    for (auto s : sources) {
        std::vector<double> cost(n, kInf);
        cost[s] = 0.0;
        stack.assign(1, s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (const auto& [v, w] : tree.adj[u]) {
                if (cost[v] != kInf) continue;
                cost[v] = std::max(cost[u], w);
                stack.push_back(v);
            }
        }
        out.push_back(std::move(cost));
    }
    return out;
}

std::vector<double> ift_costs(const Matrix& coords, std::span<const std::size_t> sources) {
    const std::size_t n = coords.rows();
    std::vector<double> cost(n, kInf);
    std::vector<bool> done(n, false);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (auto s : sources) {
        cost[s] = 0.0;
        queue.emplace(0.0, s);
    }
    while (!queue.empty()) {
        const auto [c, u] = queue.top();
        queue.pop();
        if (done[u] || c > cost[u]) continue;
        done[u] = true;
        for (std::size_t v = 0; v < n; ++v) {
            if (done[v]) continue;
            const double offered = std::max(c, arc_length(coords, u, v));
            if (offered < cost[v]) {
                cost[v] = offered;
                queue.emplace(offered, v);
            }
        }
    }
    return cost;
}

PropagationResult propagate(const Matrix& coords, std::span<const SampleId> ids, std::span<const Prototype> prototypes,
                            RunnerUpMode mode) {
    if (prototypes.empty()) throw PropagationError("propagation needs at least one prototype");
    if (coords.rows() != ids.size() || coords.cols() != 2) {
        throw PropagationError("projection shape does not match the id list");
    }
    std::unordered_map<SampleId, std::size_t> row_of;
    row_of.reserve(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (!row_of.emplace(ids[r], r).second) {
            throw PropagationError("duplicate id " + std::to_string(ids[r]) + " in projection");
        }
    }
    // prototypes in ascending id order so the first minimum is the lowest id
    std::vector<Prototype> protos(prototypes.begin(), prototypes.end());
    std::sort(protos.begin(), protos.end(), [](const Prototype& a, const Prototype& b) { return a.id < b.id; });
    std::vector<std::size_t> sources;
    std::vector<bool> is_proto(ids.size(), false);
    for (std::size_t k = 0; k < protos.size(); ++k) {
        auto it = row_of.find(protos[k].id);
        if (it == row_of.end()) {
            throw PropagationError("prototype " + std::to_string(protos[k].id) + " is not in the projection");
        }
        if (k > 0 && protos[k].id == protos[k - 1].id) {
            throw PropagationError("duplicate prototype " + std::to_string(protos[k].id));
        }
        sources.push_back(it->second);
        is_proto[it->second] = true;
    }

    const auto costs = ift_costs(coords, sources);
    const auto maps = prototype_bottlenecks(coords, sources);

    std::vector<std::size_t> order(ids.size());
    for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

    PropagationResult result;
    result.entries.reserve(ids.size() - protos.size());
    for (auto r : order) {
        if (is_proto[r]) continue;
        std::size_t root = 0;
        for (std::size_t k = 1; k < protos.size(); ++k) {
            if (maps[k][r] < maps[root][r]) root = k;
        }
        if (maps[root][r] != costs[r]) {
            throw PropagationError("internal: forest cost disagrees with bottleneck map for id " +
                                   std::to_string(ids[r]));
        }
        std::optional<double> runner;
        for (std::size_t k = 0; k < protos.size(); ++k) {
            if (k == root) continue;
            if (mode == RunnerUpMode::Class && protos[k].label == protos[root].label) continue;
            if (!runner || maps[k][r] < *runner) runner = maps[k][r];
        }
        PropagationEntry e;
        e.id = ids[r];
        e.root = protos[root].id;
        e.pseudo_label = protos[root].label;
        e.cost = costs[r];
        e.runner_up = runner;
        e.confidence = confidence(e.cost, runner);
        result.entries.push_back(e);
    }
    return result;
}

} // namespace opal
