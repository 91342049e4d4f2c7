#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "opal/dataset.hpp"

namespace opal {

enum class LabelKind { Unlabeled, PseudoLabeled, OracleLabeled, SeedLabeled };

std::string to_string(LabelKind kind);
LabelKind label_kind_from_string(const std::string& text);

struct LabelState {
    LabelKind kind = LabelKind::Unlabeled;
    ClassIndex label = -1;     // meaningful unless Unlabeled
    double confidence = 0.0;   // only for PseudoLabeled

    bool is_labeled() const { return kind == LabelKind::SeedLabeled || kind == LabelKind::OracleLabeled; }
    bool operator==(const LabelState&) const = default;
};

class LabelStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Per-sample label state over the training set Z. Ground truth lives in the
// Dataset; the store only tracks what the algorithm is allowed to see.
// Seed and oracle labels are terminal: attempts to overwrite them throw.
class LabelStore {
public:
    LabelStore() = default;
    LabelStore(std::vector<SampleId> train_ids, int num_classes);

    void set_seed(SampleId id, ClassIndex label);
    void set_oracle(SampleId id, ClassIndex label);
    // Pseudo-labels may replace earlier pseudo-labels; labeled ids are rejected.
    void set_pseudo(SampleId id, ClassIndex label, double confidence);
    void clear_pseudo();

    const LabelState& state(SampleId id) const;
    bool contains(SampleId id) const { return states_.contains(id); }
    bool is_labeled(SampleId id) const { return state(id).is_labeled(); }
    ClassIndex label(SampleId id) const;

    int num_classes() const { return num_classes_; }
    std::size_t size() const { return states_.size(); }

    // Ascending id order.
    std::vector<SampleId> labeled_ids() const;
    std::vector<SampleId> unlabeled_ids() const;  // everything not seed/oracle labeled
    std::vector<SampleId> all_ids() const;
    std::size_t labeled_count() const;
    std::size_t oracle_count() const;

    bool operator==(const LabelStore&) const = default;

    nlohmann::json to_json() const;
    static LabelStore from_json(const nlohmann::json& j);

private:
    LabelState& mutable_state(SampleId id);
    void check_class(ClassIndex label) const;

    std::map<SampleId, LabelState> states_;
    int num_classes_ = 0;
};

} // namespace opal
