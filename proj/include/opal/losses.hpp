#pragma once

#include <span>
#include <vector>

#include "opal/batching.hpp"
#include "opal/matrix.hpp"

namespace opal {

// Euclidean distance between two contrastive-head outputs.
double contrastive_distance(std::span<const double> z1, std::span<const double> z2);

// Class-imbalance weight for similar pairs: num_classes - 1.
double class_weight_tau(int num_classes);

// Contribution of a single pair at distance `distance`.
double pair_contrastive_term(int dissimilar, double distance, double tau, double margin);

struct ContrastiveParts {
    double similar = 0.0;     // includes the tau factor
    double dissimilar = 0.0;
    double total() const { return similar + dissimilar; }
};

// Sum over pairs, with z1.row(pair.first) against z2.row(pair.second).
ContrastiveParts contrastive_loss_parts(const Matrix& z1, const Matrix& z2, std::span<const SamplePair> pairs,
                                        double tau, double margin);
double contrastive_loss(const Matrix& z1, const Matrix& z2, std::span<const SamplePair> pairs, double tau,
                        double margin);

// Same loss from precomputed pair distances.
double contrastive_loss(std::span<const double> distances, std::span<const int> dissimilar, double tau,
                        double margin);

// log(sum(exp(row))) with the max shift.
double log_sum_exp(std::span<const double> row);
std::vector<double> softmax(std::span<const double> logits);

// Mean cross-entropy of softmax(logits) against integer labels.
double supervised_loss(const Matrix& logits, std::span<const ClassIndex> labels);

// Same formula applied to logits of strongly augmented inputs against
// pseudo-labels. Empty input gives 0.
double semisup_loss(const Matrix& logits, std::span<const ClassIndex> pseudo_labels);

struct LossBreakdown {
    double l_cl = 0.0;
    double l_s = 0.0;
    double l_ssl = 0.0;
    double total = 0.0;

    static LossBreakdown make(double cl, double s, double ssl) {
        // accumulation order is fixed: ((cl + s) + ssl)
        return LossBreakdown{cl, s, ssl, (cl + s) + ssl};
    }
};

} // namespace opal
