#pragma once

// Finite-difference oracle for the network losses. The numeric side only
// uses the inference forward passes and the plain loss functions, never the
// tape, so it checks the tape independently.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "opal/batching.hpp"
#include "opal/losses.hpp"
#include "opal/network.hpp"
#include "opal/rng.hpp"
#include "opal/tape.hpp"

namespace opal::testing {

enum class LossKind { Contrastive, Supervised, SemiSupervised };

struct GradProblem {
    NetworkParams params;
    Matrix view1, view2;            // contrastive views of the labeled batch
    std::vector<SamplePair> pairs;
    double tau = 2.0;
    double margin = 2.0;
    Matrix labeled;                 // inputs for the supervised term
    std::vector<ClassIndex> labels;
    Matrix strong;                  // augmented pseudo-labeled inputs
    std::vector<ClassIndex> pseudo;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = scale * rng.normal();
    return m;
}

inline GradProblem random_problem(Rng& rng) {
    Arch arch;
    arch.input_dim = 3;
    arch.encoder = {8, 6};
    arch.contrastive = {4};
    arch.num_classes = 3;
    GradProblem p;
    p.params = init_params(arch, rng.next());
    // non-zero biases so the check also covers them
    for (auto* t : p.params.tensors()) {
        if (t->rows() == 1) {
            for (auto& v : t->data()) v = 0.1 * rng.normal();
        }
    }
    const std::size_t n = 5;
    p.labels.resize(n);
    for (auto& y : p.labels) y = static_cast<ClassIndex>(rng.below(3));
    p.pairs = make_pairs(p.labels);
    p.tau = class_weight_tau(3);
    p.margin = 2.0;
    p.view1 = random_matrix(n, 3, rng);
    p.view2 = random_matrix(n, 3, rng);
    p.labeled = random_matrix(n, 3, rng);
    p.strong = random_matrix(4, 3, rng);
    p.pseudo.resize(4);
    for (auto& y : p.pseudo) y = static_cast<ClassIndex>(rng.below(3));
    return p;
}

inline double numeric_loss(const GradProblem& p, const NetworkParams& params, LossKind kind) {
    switch (kind) {
    case LossKind::Contrastive:
        return contrastive_loss(project_contrastive(params, p.view1), project_contrastive(params, p.view2), p.pairs,
                                p.tau, p.margin);
    case LossKind::Supervised: return supervised_loss(classify(params, p.labeled), p.labels);
    case LossKind::SemiSupervised: return semisup_loss(classify(params, p.strong), p.pseudo);
    }
    return 0.0;
}

struct TapeResult {
    double loss = 0.0;
    double kink_distance = 0.0;
    std::vector<std::optional<Matrix>> grads;
};

inline TapeResult tape_loss(const GradProblem& p, LossKind kind) {
    Tape tape;
    BoundNetwork net(tape, p.params);
    Tape::Node root = 0;
    switch (kind) {
    case LossKind::Contrastive: {
        auto z1 = net.contrastive_head(net.encode(tape.constant(p.view1)));
        auto z2 = net.contrastive_head(net.encode(tape.constant(p.view2)));
        root = tape.contrastive(z1, z2, p.pairs, p.tau, p.margin);
        break;
    }
    case LossKind::Supervised:
        root = tape.softmax_cross_entropy(net.classifier_head(net.encode(tape.constant(p.labeled))), p.labels);
        break;
    case LossKind::SemiSupervised:
        root = tape.softmax_cross_entropy(net.classifier_head(net.encode(tape.constant(p.strong))), p.pseudo);
        break;
    }
    tape.backward(root);
    return TapeResult{tape.scalar(root), tape.kink_distance(), net.gradients()};
}

// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between the tape
// gradient and central differences over every parameter entry.
inline double gradient_relative_error(const GradProblem& p, LossKind kind, double eps = 1e-4) {
    const auto analytic = tape_loss(p, kind);
    NetworkParams probe = p.params;
    auto tensors = probe.tensors();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        auto& data = tensors[k]->data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = numeric_loss(p, probe, kind);
            data[i] = saved - eps;
            const double down = numeric_loss(p, probe, kind);
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.grads[k] ? analytic.grads[k]->data()[i] : 0.0;
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    const double scale = std::sqrt(std::max(a2, n2));
    return scale == 0.0 ? 0.0 : std::sqrt(diff2) / scale;
}

// Draws problems until one sits at least `min_kink` away from every ReLU
// and hinge kink, so that central differences are valid.
inline GradProblem smooth_problem(Rng& rng, double min_kink = 2e-3) {
    while (true) {
        auto p = random_problem(rng);
        bool ok = true;
        for (auto kind : {LossKind::Contrastive, LossKind::Supervised, LossKind::SemiSupervised}) {
            ok = ok && tape_loss(p, kind).kink_distance > min_kink;
        }
        if (ok) return p;
    }
}

} // namespace opal::testing
