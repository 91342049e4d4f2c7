#include "opal/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace opal {

double cosine_lr(std::uint64_t t, std::uint64_t total_steps, double lr0) {
    if (t > total_steps) {
        throw std::out_of_range("cosine_lr: step " + std::to_string(t) + " exceeds total " +
                                std::to_string(total_steps));
    }
    if (total_steps == 0) return lr0;
    return lr0 * std::cos(7.0 * std::numbers::pi * static_cast<double>(t) / (16.0 * static_cast<double>(total_steps)));
}

OptimizerState OptimizerState::for_params(const NetworkParams& params, std::uint64_t total_steps, double lr0,
                                          double momentum, double weight_decay, bool nesterov) {
    OptimizerState s;
    for (const auto* t : params.tensors()) s.velocity.emplace_back(t->rows(), t->cols());
    s.total_steps = total_steps;
    s.lr0 = lr0;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.nesterov = nesterov;
    return s;
}

double clip_gradients(std::vector<std::optional<Matrix>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        if (g)
            for (double v : g->data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            if (g)
                for (double& v : g->data()) v *= f;
    }
    return norm;
}

double sgd_step(NetworkParams& params, const std::vector<std::optional<Matrix>>& grads, OptimizerState& state) {
    auto tensors = params.tensors();
    const auto bias = params.bias_mask();
    if (grads.size() != tensors.size() || state.velocity.size() != tensors.size()) {
        throw std::invalid_argument("sgd_step: gradient count does not match parameters");
    }
    const double lr = cosine_lr(state.step, state.total_steps, state.lr0);
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        if (!grads[k]) continue;
        Matrix& p = *tensors[k];
        const Matrix& g = *grads[k];
        Matrix& v = state.velocity[k];
        if (!g.same_shape(p) || !v.same_shape(p)) throw std::invalid_argument("sgd_step: shape mismatch");
        const double wd = bias[k] ? 0.0 : state.weight_decay;
        auto& pd = p.data();
        auto& vd = v.data();
        const auto& gd = g.data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            const double d = gd[i] + wd * pd[i];
            vd[i] = state.momentum * vd[i] + d;
            const double update = state.nesterov ? d + state.momentum * vd[i] : vd[i];
            pd[i] -= lr * update;
        }
    }
    ++state.step;
    return lr;
}

} // namespace opal
