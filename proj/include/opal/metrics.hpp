#pragma once

#include <span>
#include <vector>

#include "opal/dataset.hpp"

namespace opal {

// counts[t][p]: samples of true class t predicted as p.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ClassIndex> predicted,
                                                       std::span<const ClassIndex> truth, int num_classes);

double accuracy(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth);

// (p_o - p_e) / (1 - p_e); 0 when p_e = 1.
double cohens_kappa(std::span<const ClassIndex> predicted, std::span<const ClassIndex> truth, int num_classes);
double cohens_kappa(const std::vector<std::vector<std::size_t>>& confusion);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};
MeanStd mean_std(std::span<const double> values);

} // namespace opal
