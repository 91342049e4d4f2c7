#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <json.hpp>

#include "opal/opf.hpp"

namespace opal {

struct PseudoLabel {
    SampleId id = 0;
    ClassIndex label = 0;
    double confidence = 0.0;
    bool operator==(const PseudoLabel&) const = default;
};

struct PseudoLabelSet {
    int source_network = 0;            // 1 or 2; 0 when unset
    std::vector<PseudoLabel> entries;  // ascending id

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
    std::vector<SampleId> ids() const;
    bool operator==(const PseudoLabelSet&) const = default;

    nlohmann::json to_json() const;
    static PseudoLabelSet from_json(const nlohmann::json& j);
};

struct QueryItem {
    SampleId id = 0;
    double confidence = 0.0;
    bool operator==(const QueryItem&) const = default;
};

struct ActiveQuery {
    std::vector<QueryItem> items;  // ascending confidence, then id
    std::size_t k_active = 0;

    std::vector<SampleId> ids() const;
    bool operator==(const ActiveQuery&) const = default;
};

// Drops entries whose id satisfies `exclude`.
PropagationResult without(const PropagationResult& prop, const std::function<bool(SampleId)>& exclude);

// Per pseudo-class, the ceil(frac * n_c) entries with the highest
// confidence (at least one per present class). Ties go to the lower id.
PseudoLabelSet select_confident(const PropagationResult& prop, double frac = 0.10, int source_network = 0);

// The k entries with the lowest confidence, ascending; ties to the lower id.
ActiveQuery select_uncertain(const PropagationResult& prop, std::size_t k_active);

// Union of two queries keyed by id, keeping each id's lowest confidence,
// minus ids for which `is_labeled` holds, truncated to the k lowest.
ActiveQuery merge_active(const ActiveQuery& q1, const ActiveQuery& q2, std::size_t k_active,
                         const std::function<bool(SampleId)>& is_labeled = {});

// How many ids the next query may carry without pushing c_active past
// n_active.
std::size_t query_budget(std::size_t c_active, std::size_t n_active, std::size_t k_active);

// Keeps only the first `budget` items.
ActiveQuery truncate(ActiveQuery q, std::size_t budget);

} // namespace opal
