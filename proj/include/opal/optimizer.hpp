#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "opal/network.hpp"

namespace opal {

// lr0 * cos(7 pi t / (16 T)); throws if t > T.
double cosine_lr(std::uint64_t t, std::uint64_t total_steps, double lr0);

struct OptimizerState {
    std::vector<Matrix> velocity;  // mirrors NetworkParams::tensors()
    std::uint64_t step = 0;
    std::uint64_t total_steps = 0;
    double lr0 = 3e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool nesterov = true;

    static OptimizerState for_params(const NetworkParams& params, std::uint64_t total_steps, double lr0,
                                     double momentum = 0.9, double weight_decay = 5e-4, bool nesterov = true);
    bool operator==(const OptimizerState&) const = default;
};

// Global L2 norm over all gradients. When max_norm > 0 and the norm exceeds
// it, every gradient is scaled down so the norm equals max_norm. Returns the
// norm before clipping.
double clip_gradients(std::vector<std::optional<Matrix>>& grads, double max_norm);

// One SGD step with momentum (Nesterov when enabled) and L2 weight decay
// folded into the gradient. Biases are not decayed. Tensors without a
// gradient (not reached by the loss) are left untouched, velocity included.
// Returns the learning rate used.
double sgd_step(NetworkParams& params, const std::vector<std::optional<Matrix>>& grads, OptimizerState& state);

} // namespace opal
