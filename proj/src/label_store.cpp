#include "opal/label_store.hpp"

namespace opal {

std::string to_string(LabelKind kind) {
    switch (kind) {
    case LabelKind::Unlabeled: return "unlabeled";
    case LabelKind::PseudoLabeled: return "pseudo";
    case LabelKind::OracleLabeled: return "oracle";
    case LabelKind::SeedLabeled: return "seed";
    }
    return "unknown";
}

LabelKind label_kind_from_string(const std::string& text) {
    if (text == "unlabeled") return LabelKind::Unlabeled;
    if (text == "pseudo") return LabelKind::PseudoLabeled;
    if (text == "oracle") return LabelKind::OracleLabeled;
    if (text == "seed") return LabelKind::SeedLabeled;
    throw std::invalid_argument("unknown label state '" + text + "'");
}

LabelStore::LabelStore(std::vector<SampleId> train_ids, int num_classes) : num_classes_(num_classes) {
    for (auto id : train_ids) states_.emplace(id, LabelState{});
}

void LabelStore::check_class(ClassIndex label) const {
    if (label < 0 || label >= num_classes_) {
        throw std::out_of_range("class index " + std::to_string(label) + " outside [0, " +
                                std::to_string(num_classes_) + ")");
    }
}

LabelState& LabelStore::mutable_state(SampleId id) {
    auto it = states_.find(id);
    if (it == states_.end()) throw std::out_of_range("sample " + std::to_string(id) + " is not in the training set");
    return it->second;
}

const LabelState& LabelStore::state(SampleId id) const {
    auto it = states_.find(id);
    if (it == states_.end()) throw std::out_of_range("sample " + std::to_string(id) + " is not in the training set");
    return it->second;
}

ClassIndex LabelStore::label(SampleId id) const {
    const auto& s = state(id);
    if (s.kind == LabelKind::Unlabeled) throw LabelStateError("sample " + std::to_string(id) + " has no label");
    return s.label;
}

void LabelStore::set_seed(SampleId id, ClassIndex label) {
    check_class(label);
    auto& s = mutable_state(id);
    if (s.is_labeled()) throw LabelStateError("sample " + std::to_string(id) + " is already labeled");
    s = LabelState{LabelKind::SeedLabeled, label, 1.0};
}

void LabelStore::set_oracle(SampleId id, ClassIndex label) {
    check_class(label);
    auto& s = mutable_state(id);
    if (s.is_labeled()) throw LabelStateError("sample " + std::to_string(id) + " is already labeled");
    s = LabelState{LabelKind::OracleLabeled, label, 1.0};
}

void LabelStore::set_pseudo(SampleId id, ClassIndex label, double confidence) {
    check_class(label);
    auto& s = mutable_state(id);
    if (s.is_labeled()) {
        throw LabelStateError("pseudo-label would overwrite the label of sample " + std::to_string(id));
    }
    s = LabelState{LabelKind::PseudoLabeled, label, confidence};
}

void LabelStore::clear_pseudo() {
    for (auto& [id, s] : states_) {
        if (s.kind == LabelKind::PseudoLabeled) s = LabelState{};
    }
}

std::vector<SampleId> LabelStore::labeled_ids() const {
    std::vector<SampleId> out;
    for (const auto& [id, s] : states_) {
        if (s.is_labeled()) out.push_back(id);
    }
    return out;
}

std::vector<SampleId> LabelStore::unlabeled_ids() const {
    std::vector<SampleId> out;
    for (const auto& [id, s] : states_) {
        if (!s.is_labeled()) out.push_back(id);
    }
    return out;
}

std::vector<SampleId> LabelStore::all_ids() const {
    std::vector<SampleId> out;
    out.reserve(states_.size());
    for (const auto& [id, s] : states_) out.push_back(id);
    return out;
}

std::size_t LabelStore::labeled_count() const {
    std::size_t n = 0;
    for (const auto& [id, s] : states_) n += s.is_labeled() ? 1 : 0;
    return n;
}

std::size_t LabelStore::oracle_count() const {
    std::size_t n = 0;
    for (const auto& [id, s] : states_) n += s.kind == LabelKind::OracleLabeled ? 1 : 0;
    return n;
}

nlohmann::json LabelStore::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [id, s] : states_) {
        entries.push_back({id, to_string(s.kind), s.label, s.confidence});
    }
    return {{"num_classes", num_classes_}, {"entries", entries}};
}

LabelStore LabelStore::from_json(const nlohmann::json& j) {
    LabelStore store;
    store.num_classes_ = j.at("num_classes").get<int>();
    for (const auto& e : j.at("entries")) {
        store.states_.emplace(e.at(0).get<SampleId>(),
                              LabelState{label_kind_from_string(e.at(1).get<std::string>()),
                                         e.at(2).get<ClassIndex>(), e.at(3).get<double>()});
    }
    return store;
}

} // namespace opal
