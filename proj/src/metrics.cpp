#include "opal/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace opal {

namespace {

void check_inputs(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("prediction and truth lengths differ");
    if (predicted.empty()) throw std::invalid_argument("metrics need at least one sample");
}

} // namespace

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassIndex> predicted,
                                                       std::span<const ClassIndex> truth, int num_classes) {
    check_inputs(predicted, truth);
    const auto m = static_cast<std::size_t>(num_classes);
    std::vector<std::vector<std::size_t>> c(m, std::vector<std::size_t>(m, 0));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] < 0 || truth[i] < 0 || predicted[i] >= num_classes || truth[i] >= num_classes) {
            throw std::invalid_argument("class index out of range");
        }
        ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return c;
}

double accuracy(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth) {
    check_inputs(predicted, truth);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

double cohens_kappa(const std::vector<std::vector<std::size_t>>& confusion) {
    const std::size_t m = confusion.size();
    double total = 0.0, diag = 0.0;
    std::vector<double> rows(m, 0.0), cols(m, 0.0);
    for (std::size_t t = 0; t < m; ++t) {
        for (std::size_t p = 0; p < m; ++p) {
            const auto v = static_cast<double>(confusion[t][p]);
            total += v;
            rows[t] += v;
            cols[p] += v;
            if (t == p) diag += v;
        }
    }
    if (total == 0.0) throw std::invalid_argument("empty confusion matrix");
    const double po = diag / total;
    double pe = 0.0;
    for (std::size_t k = 0; k < m; ++k) pe += (rows[k] / total) * (cols[k] / total);
    if (pe >= 1.0) {
        spdlog::warn("chance agreement is 1, kappa reported as 0");
        return 0.0;
    }
    return (po - pe) / (1.0 - pe);
}

double cohens_kappa(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth, int num_classes) {
    return cohens_kappa(confusion_matrix(predicted, truth, num_classes));
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

} // namespace opal
