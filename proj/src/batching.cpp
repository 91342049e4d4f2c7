#include "opal/batching.hpp"

#include <stdexcept>

namespace opal {

std::size_t batch_count(std::size_t n, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    return (n + batch_size - 1) / batch_size;
}

std::vector<Batch> make_batches(std::vector<SampleId> ids, std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
    rng.shuffle(ids.begin(), ids.end());
    std::vector<Batch> batches;
    batches.reserve(batch_count(ids.size(), batch_size));
    for (std::size_t start = 0; start < ids.size(); start += batch_size) {
        const auto end = std::min(ids.size(), start + batch_size);
        batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(start),
                             ids.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<SamplePair> make_pairs(std::span<const ClassIndex> labels) {
    std::vector<SamplePair> pairs;
    pairs.reserve(labels.size() * (labels.size() > 0 ? labels.size() - 1 : 0) / 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            pairs.push_back(SamplePair{labels[i] == labels[j] ? 0 : 1, i, j, 0, 0});
        }
    }
    return pairs;
}

std::vector<SamplePair> make_pairs(std::span<const SampleId> batch, const LabelStore& store) {
    std::vector<ClassIndex> labels;
    labels.reserve(batch.size());
    for (auto id : batch) {
        if (!store.is_labeled(id)) {
            throw LabelStateError("make_pairs: sample " + std::to_string(id) + " is not labeled");
        }
        labels.push_back(store.label(id));
    }
    auto pairs = make_pairs(labels);
    for (auto& p : pairs) {
        p.id_a = batch[p.first];
        p.id_b = batch[p.second];
    }
    return pairs;
}

} // namespace opal
