#include "opal/split.hpp"

#include <algorithm>
#include <cmath>

#include "opal/rng.hpp"

namespace opal {

std::size_t ceil_fraction(double frac, std::size_t n) {
    const double x = frac * static_cast<double>(n);
    return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

std::size_t seed_quota(double labeled_frac, std::size_t class_size) {
    return std::max<std::size_t>(1, ceil_fraction(labeled_frac, class_size));
}

SplitPlan stratified_split(const Dataset& ds, int folds, double labeled_frac, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("stratified_split: need at least 2 folds");
    if (!(labeled_frac > 0.0 && labeled_frac < 1.0)) {
        throw std::invalid_argument("stratified_split: labeled_frac must be in (0, 1)");
    }
    const auto m = static_cast<std::size_t>(ds.num_classes());
    if (labeled_frac * static_cast<double>(ds.size()) + 1e-9 < static_cast<double>(m)) {
        throw DatasetError("labeled_budget_too_small",
                           "labeled budget " + std::to_string(labeled_frac * static_cast<double>(ds.size())) +
                               " is smaller than the class count " + std::to_string(m));
    }

    Rng rng(seed);
    std::vector<std::vector<SampleId>> by_class(m);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels()[i])].push_back(ds.ids()[i]);
    for (auto& members : by_class) {
        std::sort(members.begin(), members.end());
        rng.shuffle(members.begin(), members.end());
    }

    SplitPlan plan;
    plan.fold_count = folds;
    plan.labeled_frac = labeled_frac;
    plan.seed = seed;
    plan.folds.resize(static_cast<std::size_t>(folds));

    // Deal class by class with one running counter: fold sizes differ by at
    // most one overall and per class.
    std::vector<std::size_t> fold_of(ds.size());
    std::size_t deal = 0;
    for (const auto& members : by_class) {
        for (auto id : members) fold_of[ds.index_of(id)] = deal++ % static_cast<std::size_t>(folds);
    }

    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        Fold& fold = plan.folds[f];
        for (std::size_t i = 0; i < ds.size(); ++i) {
            (fold_of[i] == f ? fold.test : fold.train).push_back(ds.ids()[i]);
        }
        Rng fold_rng(mix_seed(seed, f));
        for (std::size_t c = 0; c < m; ++c) {
            std::vector<SampleId> candidates;
            for (auto id : by_class[c]) {
                if (fold_of[ds.index_of(id)] != f) candidates.push_back(id);
            }
            std::sort(candidates.begin(), candidates.end());
            fold_rng.shuffle(candidates.begin(), candidates.end());
            const auto quota = std::min(seed_quota(labeled_frac, by_class[c].size()), candidates.size());
            fold.seed_labeled.insert(fold.seed_labeled.end(), candidates.begin(),
                                     candidates.begin() + static_cast<std::ptrdiff_t>(quota));
        }
        std::sort(fold.train.begin(), fold.train.end());
        std::sort(fold.test.begin(), fold.test.end());
        std::sort(fold.seed_labeled.begin(), fold.seed_labeled.end());
    }
    return plan;
}

nlohmann::json to_json(const SplitPlan& plan) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : plan.folds) {
        folds.push_back({{"train", f.train}, {"test", f.test}, {"seed_labeled", f.seed_labeled}});
    }
    return {{"fold_count", plan.fold_count},
            {"labeled_frac", plan.labeled_frac},
            {"seed", plan.seed},
            {"folds", folds}};
}

SplitPlan split_plan_from_json(const nlohmann::json& j) {
    SplitPlan plan;
    plan.fold_count = j.at("fold_count").get<int>();
    plan.labeled_frac = j.at("labeled_frac").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("folds")) {
        plan.folds.push_back(Fold{f.at("train").get<std::vector<SampleId>>(),
                                  f.at("test").get<std::vector<SampleId>>(),
                                  f.at("seed_labeled").get<std::vector<SampleId>>()});
    }
    return plan;
}

} // namespace opal
