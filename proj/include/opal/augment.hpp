#pragma once

#include <span>
#include <vector>

#include "opal/matrix.hpp"
#include "opal/rng.hpp"

namespace opal {

// Feature-vector stand-in for image augmentation. Every magnitude at zero
// gives the identity map.
struct AugmentPolicy {
    double jitter_sigma = 0.0;  // additive N(0, sigma^2) per coordinate
    double mask_frac = 0.0;     // floor(mask_frac * d) coordinates zeroed
    double scale_range = 0.0;   // per-sample factor drawn from U(1 - r, 1 + r)

    bool is_identity() const { return jitter_sigma == 0.0 && mask_frac == 0.0 && scale_range == 0.0; }
    void validate() const;
    bool operator==(const AugmentPolicy&) const = default;
};

std::vector<double> strong_augment(std::span<const double> features, const AugmentPolicy& policy, Rng& rng);

// Applies strong_augment row by row.
Matrix augment_rows(const Matrix& rows, const AugmentPolicy& policy, Rng& rng);

} // namespace opal
