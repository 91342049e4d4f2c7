#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "opal/dataset.hpp"

namespace opal {

struct Fold {
    std::vector<SampleId> train;         // Z
    std::vector<SampleId> test;          // Z_T
    std::vector<SampleId> seed_labeled;  // initial Z_L, subset of train

    bool operator==(const Fold&) const = default;
};

struct SplitPlan {
    int fold_count = 3;
    double labeled_frac = 0.01;
    std::uint64_t seed = 0;
    std::vector<Fold> folds;

    bool operator==(const SplitPlan&) const = default;
};

// Number of seed labels drawn for a class of `class_size` samples:
// ceil(labeled_frac * class_size), at least 1.
std::size_t seed_quota(double labeled_frac, std::size_t class_size);

// ceil(frac * n) with a guard against representation error in `frac`
// (0.1 * 30 must give 3, not 4).
std::size_t ceil_fraction(double frac, std::size_t n);

// Stratified k-fold split with stratified seed-label selection inside each
// training part. Deterministic in `seed`.
SplitPlan stratified_split(const Dataset& ds, int folds, double labeled_frac, std::uint64_t seed);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const nlohmann::json& j);

} // namespace opal
