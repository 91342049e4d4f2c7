#pragma once

#include <cstdint>

#include "opal/dataset.hpp"

namespace opal {

struct BlobSpec {
    std::size_t n = 1200;
    std::size_t dim = 16;
    int classes = 4;
    double center_spread = 1.0;  // std of the class centers around the origin
    double cluster_std = 1.0;
    std::uint64_t seed = 7;
};

// Isotropic Gaussian blobs with near-equal class sizes; ids are 0..n-1 and
// rows are shuffled so classes interleave.
Dataset make_blobs(const BlobSpec& spec);

} // namespace opal
