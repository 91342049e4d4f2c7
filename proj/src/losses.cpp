#include "opal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace opal {

double contrastive_distance(std::span<const double> z1, std::span<const double> z2) {
    if (z1.size() != z2.size()) throw std::invalid_argument("contrastive_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < z1.size(); ++k) {
        const double diff = z1[k] - z2[k];
        s += diff * diff;
    }
    return std::sqrt(s);
}

double class_weight_tau(int num_classes) {
    if (num_classes < 2) throw std::invalid_argument("class_weight_tau: need at least 2 classes");
    return static_cast<double>(num_classes - 1);
}

double pair_contrastive_term(int dissimilar, double distance, double tau, double margin) {
    if (dissimilar == 0) return tau * 0.5 * distance * distance;
    const double gap = std::max(0.0, margin - distance);
    return 0.5 * gap * gap;
}

ContrastiveParts contrastive_loss_parts(const Matrix& z1, const Matrix& z2, std::span<const SamplePair> pairs,
                                        double tau, double margin) {
    if (z1.cols() != z2.cols()) throw std::invalid_argument("contrastive_loss: dimension mismatch");
    if (margin <= 0.0) throw std::invalid_argument("contrastive_loss: margin must be positive");
    ContrastiveParts parts;
    for (const auto& p : pairs) {
        const double d = contrastive_distance(z1.row(p.first), z2.row(p.second));
        const double term = pair_contrastive_term(p.dissimilar, d, tau, margin);
        (p.dissimilar == 0 ? parts.similar : parts.dissimilar) += term;
    }
    return parts;
}

double contrastive_loss(const Matrix& z1, const Matrix& z2, std::span<const SamplePair> pairs, double tau,
                        double margin) {
    if (margin <= 0.0) throw std::invalid_argument("contrastive_loss: margin must be positive");
    double total = 0.0;
    for (const auto& p : pairs) {
        total += pair_contrastive_term(p.dissimilar, contrastive_distance(z1.row(p.first), z2.row(p.second)), tau,
                                       margin);
    }
    return total;
}

double contrastive_loss(std::span<const double> distances, std::span<const int> dissimilar, double tau,
                        double margin) {
    if (distances.size() != dissimilar.size()) throw std::invalid_argument("contrastive_loss: length mismatch");
    if (margin <= 0.0) throw std::invalid_argument("contrastive_loss: margin must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        total += pair_contrastive_term(dissimilar[i], distances[i], tau, margin);
    }
    return total;
}

double log_sum_exp(std::span<const double> row) {
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    return mx + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) p[k] = std::exp(logits[k] - lse);
    return p;
}

double supervised_loss(const Matrix& logits, std::span<const ClassIndex> labels) {
    if (logits.rows() == 0) throw std::invalid_argument("supervised_loss: empty batch");
    if (labels.size() != logits.rows()) throw std::invalid_argument("supervised_loss: label count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw std::out_of_range("supervised_loss: label " + std::to_string(y) + " out of range");
        }
        total += log_sum_exp(logits.row(i)) - logits(i, static_cast<std::size_t>(y));
    }
    return total / static_cast<double>(logits.rows());
}

double semisup_loss(const Matrix& logits, std::span<const ClassIndex> pseudo_labels) {
    if (logits.rows() == 0) return 0.0;
    return supervised_loss(logits, pseudo_labels);
}

} // namespace opal
