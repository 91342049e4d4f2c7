#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "opal/matrix.hpp"
#include "opal/tape.hpp"

namespace opal {

// Layer sizes of one network. The encoder applies ReLU after every layer;
// the heads are ReLU stacks whose last layer is linear.
struct Arch {
    std::size_t input_dim = 0;
    std::vector<std::size_t> encoder{256, 64};
    std::vector<std::size_t> contrastive{32};
    std::size_t num_classes = 2;

    std::size_t feature_dim() const { return encoder.empty() ? input_dim : encoder.back(); }
    void validate() const;
    bool operator==(const Arch&) const = default;

    nlohmann::json to_json() const;
    static Arch from_json(const nlohmann::json& j);
};

struct DenseLayer {
    Matrix weight;  // fan_in x fan_out
    Matrix bias;    // 1 x fan_out
    bool operator==(const DenseLayer&) const = default;
};

enum class ParamGroup { Encoder, ContrastiveHead, ClassifierHead };

struct NetworkParams {
    Arch arch;
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> contrastive;
    std::vector<DenseLayer> classifier;

    // Flat view in a fixed order: every layer's weight then bias, encoder
    // first, then the contrastive head, then the classifier head.
    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;
    // Per tensor: is it a bias, and which group it belongs to.
    std::vector<bool> bias_mask() const;
    std::vector<ParamGroup> groups() const;
    std::size_t parameter_count() const;

    bool operator==(const NetworkParams&) const = default;
};

// Kaiming-normal weights (variance 2 / fan_in), zero biases.
NetworkParams init_params(const Arch& arch, std::uint64_t seed);

// Inference-only forward passes; rows of `x` are independent samples.
Matrix encode(const NetworkParams& params, const Matrix& x);
Matrix project_contrastive(const NetworkParams& params, const Matrix& x);
Matrix classify(const NetworkParams& params, const Matrix& x);
std::vector<double> encode(const NetworkParams& params, std::span<const double> x);

// Parameter nodes of one network bound into a tape. Each tensor is
// registered once, so several forward passes share gradients.
class BoundNetwork {
public:
    BoundNetwork(Tape& tape, const NetworkParams& params);

    Tape::Node encode(Tape::Node x) const;
    Tape::Node contrastive_head(Tape::Node features) const;
    Tape::Node classifier_head(Tape::Node features) const;

    // One entry per tensor of NetworkParams::tensors(); empty when the tensor
    // was not reached by backward().
    std::vector<std::optional<Matrix>> gradients() const;

private:
    Tape::Node stack(Tape::Node x, std::size_t first_layer, std::size_t count, bool relu_last) const;

    Tape& tape_;
    const NetworkParams& params_;
    std::vector<Tape::Node> nodes_;  // weight, bias per layer, in tensors() order
};

} // namespace opal
