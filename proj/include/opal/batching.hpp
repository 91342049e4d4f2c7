#pragma once

#include <span>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/label_store.hpp"
#include "opal/rng.hpp"

namespace opal {

using Batch = std::vector<SampleId>;

// Shuffles `ids` and cuts them into consecutive batches of `batch_size`;
// the last batch may be short. Every id appears exactly once.
std::vector<Batch> make_batches(std::vector<SampleId> ids, std::size_t batch_size, Rng& rng);

// Number of batches make_batches would produce.
std::size_t batch_count(std::size_t n, std::size_t batch_size);

struct SamplePair {
    int dissimilar = 0;      // y_t: 0 for same label, 1 otherwise
    std::size_t first = 0;   // positions inside the batch
    std::size_t second = 0;
    SampleId id_a = 0;
    SampleId id_b = 0;

    bool operator==(const SamplePair&) const = default;
};

// All unordered pairs of a labeled batch (first < second, lexicographic).
std::vector<SamplePair> make_pairs(std::span<const SampleId> batch, const LabelStore& labels);

// Same, from explicit labels aligned with batch positions.
std::vector<SamplePair> make_pairs(std::span<const ClassIndex> labels);

} // namespace opal
