#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "opal/rng.hpp"
#include "opal/selection.hpp"
#include "opal/split.hpp"

namespace opal::testing {

// Random propagation output: distinct ascending ids, up to `classes`
// pseudo-classes, confidences in [0.5, 1] drawn from a coarse grid so ties
// occur often.
inline PropagationResult random_propagation(Rng& rng, std::size_t max_n = 200, int classes = 5) {
    PropagationResult r;
    const auto n = 1 + rng.below(max_n);
    SampleId id = static_cast<SampleId>(rng.below(10));
    for (std::uint64_t i = 0; i < n; ++i) {
        PropagationEntry e;
        e.id = id;
        id += 1 + static_cast<SampleId>(rng.below(3));
        e.pseudo_label = static_cast<ClassIndex>(rng.below(static_cast<std::uint64_t>(classes)));
        e.confidence = 0.5 + 0.5 * static_cast<double>(rng.below(21)) / 20.0;
        r.entries.push_back(e);
    }
    return r;
}

inline ActiveQuery random_query(Rng& rng, std::size_t max_items = 8) {
    ActiveQuery q;
    const auto n = rng.below(max_items + 1);
    std::set<SampleId> used;
    while (q.items.size() < n) {
        const auto id = static_cast<SampleId>(rng.below(15));
        if (!used.insert(id).second) continue;
        q.items.push_back({id, 0.5 + 0.5 * static_cast<double>(rng.below(11)) / 10.0});
    }
    std::sort(q.items.begin(), q.items.end(), [](const QueryItem& a, const QueryItem& b) {
        return a.confidence != b.confidence ? a.confidence < b.confidence : a.id < b.id;
    });
    q.k_active = q.items.size();
    return q;
}

// Empty string when `set` is a valid select_confident(prop, frac) output.
inline std::string check_select_confident(const PropagationResult& prop, double frac, const PseudoLabelSet& set) {
    std::map<ClassIndex, std::vector<const PropagationEntry*>> by_class;
    for (const auto& e : prop.entries) by_class[e.pseudo_label].push_back(&e);
    std::size_t expected = 0;
    for (const auto& [c, members] : by_class) expected += ceil_fraction(frac, members.size());
    if (set.size() != expected) return "size " + std::to_string(set.size()) + " != " + std::to_string(expected);
    if (!std::is_sorted(set.entries.begin(), set.entries.end(),
                        [](const PseudoLabel& a, const PseudoLabel& b) { return a.id < b.id; }))
        return "entries not ascending";
    std::set<SampleId> chosen;
    for (const auto& p : set.entries) {
        const auto* e = prop.find(p.id);
        if (!e) return "unknown id";
        if (e->pseudo_label != p.label || e->confidence != p.confidence) return "entry altered";
        if (!chosen.insert(p.id).second) return "duplicate id";
    }
    for (const auto& [c, members] : by_class) {
        double min_in = 2.0, max_out = -1.0;
        std::size_t count = 0;
        for (const auto* e : members) {
            if (chosen.contains(e->id)) {
                min_in = std::min(min_in, e->confidence);
                ++count;
            } else {
                max_out = std::max(max_out, e->confidence);
            }
        }
        if (count != ceil_fraction(frac, members.size())) return "class quota";
        if (max_out > min_in) return "a higher-confidence entry was left out";
    }
    return {};
}

// Empty string when `out` is a valid merge of q1 and q2.
inline std::string check_merge(const ActiveQuery& q1, const ActiveQuery& q2, std::size_t k,
                               const std::set<SampleId>& labeled, const ActiveQuery& out) {
    std::map<SampleId, double> keyed;
    for (const auto* q : {&q1, &q2})
        for (const auto& it : q->items) {
            if (labeled.contains(it.id)) continue;
            auto [pos, fresh] = keyed.emplace(it.id, it.confidence);
            if (!fresh) pos->second = std::min(pos->second, it.confidence);
        }
    std::vector<QueryItem> all;
    for (auto [id, v] : keyed) all.push_back({id, v});
    std::sort(all.begin(), all.end(), [](const QueryItem& a, const QueryItem& b) {
        return a.confidence != b.confidence ? a.confidence < b.confidence : a.id < b.id;
    });
    if (out.items.size() != std::min(k, all.size())) return "wrong size";
    std::set<SampleId> seen;
    for (std::size_t i = 0; i < out.items.size(); ++i) {
        if (!seen.insert(out.items[i].id).second) return "duplicate id";
        if (labeled.contains(out.items[i].id)) return "labeled id";
        if (out.items[i].confidence != keyed.at(out.items[i].id)) return "confidence is not the min";
        if (out.items[i].confidence != all[i].confidence) return "not the smallest values";
    }
    return {};
}

} // namespace opal::testing
