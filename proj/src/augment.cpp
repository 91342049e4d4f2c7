#include "opal/augment.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace opal {

void AugmentPolicy::validate() const {
    if (jitter_sigma < 0.0 || mask_frac < 0.0 || scale_range < 0.0) {
        throw std::invalid_argument("augmentation magnitudes must be non-negative");
    }
    if (mask_frac > 1.0) throw std::invalid_argument("mask_frac must be at most 1");
}

std::vector<double> strong_augment(std::span<const double> features, const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    std::vector<double> out(features.begin(), features.end());
    if (policy.scale_range > 0.0) {
        const double s = rng.uniform(1.0 - policy.scale_range, 1.0 + policy.scale_range);
        for (auto& v : out) v *= s;
    }
    if (policy.jitter_sigma > 0.0) {
        for (auto& v : out) v += policy.jitter_sigma * rng.normal();
    }
    const auto d = out.size();
    const auto masked = static_cast<std::size_t>(std::floor(policy.mask_frac * static_cast<double>(d) + 1e-9));
    if (masked > 0) {
        // partial Fisher-Yates: first `masked` entries are a uniform subset
        std::vector<std::size_t> idx(d);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < masked; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(d - i));
            std::swap(idx[i], idx[j]);
            out[idx[i]] = 0.0;
        }
    }
    return out;
}

Matrix augment_rows(const Matrix& rows, const AugmentPolicy& policy, Rng& rng) {
    if (policy.is_identity()) return rows;
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto v = strong_augment(rows.row(i), policy, rng);
        std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
}

} // namespace opal
