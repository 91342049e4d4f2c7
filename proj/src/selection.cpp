#include "opal/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "opal/split.hpp"

namespace opal {

namespace {

bool lower_confidence_first(const QueryItem& a, const QueryItem& b) {
    if (a.confidence != b.confidence) return a.confidence < b.confidence;
    return a.id < b.id;
}

} // namespace

std::vector<SampleId> PseudoLabelSet::ids() const {
    std::vector<SampleId> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

nlohmann::json PseudoLabelSet::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : entries) rows.push_back({e.id, e.label, e.confidence});
    return {{"source_network", source_network}, {"entries", rows}};
}

PseudoLabelSet PseudoLabelSet::from_json(const nlohmann::json& j) {
    PseudoLabelSet s;
    s.source_network = j.at("source_network").get<int>();
    for (const auto& row : j.at("entries")) {
        s.entries.push_back({row.at(0).get<SampleId>(), row.at(1).get<ClassIndex>(), row.at(2).get<double>()});
    }
    return s;
}

std::vector<SampleId> ActiveQuery::ids() const {
    std::vector<SampleId> out;
    out.reserve(items.size());
    for (const auto& q : items) out.push_back(q.id);
    return out;
}

PropagationResult without(const PropagationResult& prop, const std::function<bool(SampleId)>& exclude) {
    PropagationResult out;
    for (const auto& e : prop.entries) {
        if (!exclude || !exclude(e.id)) out.entries.push_back(e);
    }
    return out;
}

PseudoLabelSet select_confident(const PropagationResult& prop, double frac, int source_network) {
    std::map<ClassIndex, std::vector<const PropagationEntry*>> by_class;
    for (const auto& e : prop.entries) by_class[e.pseudo_label].push_back(&e);
    PseudoLabelSet out;
    out.source_network = source_network;
    for (auto& [label, members] : by_class) {
        std::sort(members.begin(), members.end(), [](const PropagationEntry* a, const PropagationEntry* b) {
            if (a->confidence != b->confidence) return a->confidence > b->confidence;
            return a->id < b->id;
        });
        const std::size_t quota = std::max<std::size_t>(1, ceil_fraction(frac, members.size()));
        for (std::size_t k = 0; k < quota && k < members.size(); ++k) {
            out.entries.push_back({members[k]->id, label, members[k]->confidence});
        }
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const PseudoLabel& a, const PseudoLabel& b) { return a.id < b.id; });
    return out;
}

ActiveQuery select_uncertain(const PropagationResult& prop, std::size_t k_active) {
    ActiveQuery q;
    q.k_active = k_active;
    q.items.reserve(prop.entries.size());
    for (const auto& e : prop.entries) q.items.push_back({e.id, e.confidence});
    std::sort(q.items.begin(), q.items.end(), lower_confidence_first);
    if (q.items.size() > k_active) q.items.resize(k_active);
    return q;
}

ActiveQuery merge_active(const ActiveQuery& q1, const ActiveQuery& q2, std::size_t k_active,
                         const std::function<bool(SampleId)>& is_labeled) {
    std::map<SampleId, double> keyed;
    for (const auto* q : {&q1, &q2}) {
        for (const auto& item : q->items) {
            if (is_labeled && is_labeled(item.id)) continue;
            auto [it, inserted] = keyed.emplace(item.id, item.confidence);
            if (!inserted) it->second = std::min(it->second, item.confidence);
        }
    }
    ActiveQuery out;
    out.k_active = k_active;
    for (const auto& [id, v] : keyed) out.items.push_back({id, v});
    std::sort(out.items.begin(), out.items.end(), lower_confidence_first);
    if (out.items.size() > k_active) out.items.resize(k_active);
    return out;
}

std::size_t query_budget(std::size_t c_active, std::size_t n_active, std::size_t k_active) {
    if (c_active >= n_active) return 0;
    return std::min(k_active, n_active - c_active);
}

ActiveQuery truncate(ActiveQuery q, std::size_t budget) {
    if (q.items.size() > budget) q.items.resize(budget);
    return q;
}

} // namespace opal
