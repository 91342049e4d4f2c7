#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/matrix.hpp"

namespace opal {

// Raised when some feature rows coincide exactly; carries every id involved.
class DegenerateRow : public std::runtime_error {
public:
    DegenerateRow(std::vector<SampleId> ids, const std::string& what)
        : std::runtime_error(what), ids_(std::move(ids)) {}
    const std::vector<SampleId>& ids() const { return ids_; }

private:
    std::vector<SampleId> ids_;
};

class TsneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AffinityMatrix {
    std::size_t n = 0;
    std::vector<double> p;         // n*n row-major joint probabilities, zero diagonal
    double perplexity = 50.0;      // value actually used, after clamping
    bool clamped = false;
    std::vector<double> betas;     // per-row precision 1 / (2 sigma^2)
    std::vector<double> entropy;   // per-row achieved entropy in bits

    double operator()(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

struct TsneOptions {
    double perplexity = 50.0;
    int iters = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    int kl_every = 50;

    bool operator==(const TsneOptions&) const = default;
};

struct KlSample {
    int iter = 0;
    double kl = 0.0;
};

struct Projection2D {
    Matrix coords;                     // n x 2
    std::vector<KlSample> kl_history;  // first and last iterations always present
    std::uint64_t seed = 0;
    double perplexity = 0.0;
};

// Conditional distribution p_{j|i} of one row of squared distances (entry i
// ignored) at precision beta, normalized to sum 1. Returns entropy in bits.
double conditional_row(std::span<const double> sq_dist, std::size_t self, double beta, std::span<double> out);

// Throws DegenerateRow when two rows of `features` are identical.
void check_distinct_rows(const Matrix& features, std::span<const SampleId> ids);

// Bisection on each row's precision so that the entropy of p_{j|i} equals
// log2(perplexity) within 1e-5 bits, then symmetrization
// P_ij = (p_{j|i} + p_{i|j}) / 2n. Perplexities at or above n - 1 are
// clamped to (n - 1) / 3. `ids` only label error messages and may be empty.
AffinityMatrix pairwise_affinities(const Matrix& features, double perplexity, std::span<const SampleId> ids = {});

// KL(P || Q) for the Student-t similarities Q of embedding `y` (n x 2).
double kl_divergence(const AffinityMatrix& p, const Matrix& y);
// d KL / d y, with P scaled by `exaggeration`.
Matrix kl_gradient(const AffinityMatrix& p, const Matrix& y, double exaggeration = 1.0);

Projection2D tsne_embed(const AffinityMatrix& p, const TsneOptions& options, std::uint64_t seed);

// pairwise_affinities followed by tsne_embed.
Projection2D project(const Matrix& features, std::span<const SampleId> ids, const TsneOptions& options,
                     std::uint64_t seed);

} // namespace opal
