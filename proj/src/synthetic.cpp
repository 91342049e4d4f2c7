#include "opal/synthetic.hpp"

#include <numeric>
#include <stdexcept>

#include "opal/rng.hpp"

namespace opal {

Dataset make_blobs(const BlobSpec& spec) {
    if (spec.classes < 2 || spec.n < static_cast<std::size_t>(spec.classes) || spec.dim == 0)
        throw std::invalid_argument("make_blobs: need at least 2 classes, n >= classes and dim >= 1");
    Rng rng(spec.seed);
    Matrix centers(static_cast<std::size_t>(spec.classes), spec.dim);
    for (auto& v : centers.data()) v = spec.center_spread * rng.normal();

    std::vector<ClassIndex> labels(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) labels[i] = static_cast<ClassIndex>(i % static_cast<std::size_t>(spec.classes));
    rng.shuffle(labels.begin(), labels.end());

    Matrix x(spec.n, spec.dim);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < spec.dim; ++j) x(i, j) = centers(c, j) + spec.cluster_std * rng.normal();
    }
    std::vector<SampleId> ids(spec.n);
    std::iota(ids.begin(), ids.end(), SampleId{0});
    return Dataset(std::move(ids), std::move(x), std::move(labels));
}

} // namespace opal
