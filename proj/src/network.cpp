#include "opal/network.hpp"

#include <cmath>
#include <stdexcept>

#include "opal/rng.hpp"

namespace opal {

void Arch::validate() const {
    if (input_dim == 0) throw std::invalid_argument("arch: input_dim must be positive");
    if (num_classes < 2) throw std::invalid_argument("arch: need at least 2 classes");
    if (contrastive.empty()) throw std::invalid_argument("arch: contrastive head needs at least one layer");
    for (auto s : encoder) {
        if (s == 0) throw std::invalid_argument("arch: encoder layer sizes must be positive");
    }
    for (auto s : contrastive) {
        if (s == 0) throw std::invalid_argument("arch: contrastive layer sizes must be positive");
    }
}

nlohmann::json Arch::to_json() const {
    return {{"input_dim", input_dim}, {"encoder", encoder}, {"contrastive", contrastive}, {"num_classes", num_classes}};
}

Arch Arch::from_json(const nlohmann::json& j) {
    Arch a;
    a.input_dim = j.at("input_dim").get<std::size_t>();
    a.encoder = j.at("encoder").get<std::vector<std::size_t>>();
    a.contrastive = j.at("contrastive").get<std::vector<std::size_t>>();
    a.num_classes = j.at("num_classes").get<std::size_t>();
    return a;
}

namespace {

template <class Params, class Ptr>
std::vector<Ptr> flat_tensors(Params& p) {
    std::vector<Ptr> out;
    for (auto* group : {&p.encoder, &p.contrastive, &p.classifier}) {
        for (auto& layer : *group) {
            out.push_back(&layer.weight);
            out.push_back(&layer.bias);
        }
    }
    return out;
}

DenseLayer kaiming_layer(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    DenseLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : layer.weight.data()) w = stddev * rng.normal();
    return layer;
}

void dense_forward(Matrix& x, const DenseLayer& layer, bool relu) {
    Matrix out = matmul(x, layer.weight);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias(0, j);
    }
    if (relu) {
        for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(out);
}

void run_stack(Matrix& x, const std::vector<DenseLayer>& layers, bool relu_last) {
    for (std::size_t i = 0; i < layers.size(); ++i) dense_forward(x, layers[i], relu_last || i + 1 < layers.size());
}

void check_input(const NetworkParams& params, const Matrix& x) {
    if (x.cols() != params.arch.input_dim) {
        throw std::invalid_argument("network input has dimension " + std::to_string(x.cols()) + ", expected " +
                                    std::to_string(params.arch.input_dim));
    }
}

} // namespace

std::vector<Matrix*> NetworkParams::tensors() { return flat_tensors<NetworkParams, Matrix*>(*this); }

std::vector<const Matrix*> NetworkParams::tensors() const {
    return flat_tensors<const NetworkParams, const Matrix*>(*this);
}

std::vector<bool> NetworkParams::bias_mask() const {
    std::vector<bool> mask;
    const auto layers = encoder.size() + contrastive.size() + classifier.size();
    for (std::size_t i = 0; i < layers; ++i) {
        mask.push_back(false);
        mask.push_back(true);
    }
    return mask;
}

std::vector<ParamGroup> NetworkParams::groups() const {
    std::vector<ParamGroup> out;
    out.insert(out.end(), 2 * encoder.size(), ParamGroup::Encoder);
    out.insert(out.end(), 2 * contrastive.size(), ParamGroup::ContrastiveHead);
    out.insert(out.end(), 2 * classifier.size(), ParamGroup::ClassifierHead);
    return out;
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
}

NetworkParams init_params(const Arch& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    NetworkParams p;
    p.arch = arch;
    std::size_t width = arch.input_dim;
    for (auto s : arch.encoder) {
        p.encoder.push_back(kaiming_layer(width, s, rng));
        width = s;
    }
    const std::size_t features = width;
    for (auto s : arch.contrastive) {
        p.contrastive.push_back(kaiming_layer(width, s, rng));
        width = s;
    }
    p.classifier.push_back(kaiming_layer(features, arch.num_classes, rng));
    return p;
}

Matrix encode(const NetworkParams& params, const Matrix& x) {
    check_input(params, x);
    Matrix h = x;
    run_stack(h, params.encoder, false);
    return h;
}

Matrix project_contrastive(const NetworkParams& params, const Matrix& x) {
    Matrix h = encode(params, x);
    run_stack(h, params.contrastive, false);
    return h;
}

Matrix classify(const NetworkParams& params, const Matrix& x) {
    Matrix h = encode(params, x);
    run_stack(h, params.classifier, false);
    return h;
}

std::vector<double> encode(const NetworkParams& params, std::span<const double> x) {
    Matrix row(1, x.size());
    std::copy(x.begin(), x.end(), row.row(0).begin());
    return encode(params, row).data();
}

BoundNetwork::BoundNetwork(Tape& tape, const NetworkParams& params) : tape_(tape), params_(params) {
    for (const auto* t : params.tensors()) nodes_.push_back(tape.parameter(*t));
}

Tape::Node BoundNetwork::stack(Tape::Node x, std::size_t first_layer, std::size_t count, bool relu_last) const {
    for (std::size_t i = 0; i < count; ++i) {
        const auto layer = first_layer + i;
        x = tape_.dense(x, nodes_[2 * layer], nodes_[2 * layer + 1]);
        if (relu_last || i + 1 < count) x = tape_.relu(x);
    }
    return x;
}

Tape::Node BoundNetwork::encode(Tape::Node x) const {
    if (tape_.value(x).cols() != params_.arch.input_dim) {
        throw std::invalid_argument("network input dimension mismatch");
    }
    return stack(x, 0, params_.encoder.size(), false);
}

Tape::Node BoundNetwork::contrastive_head(Tape::Node features) const {
    return stack(features, params_.encoder.size(), params_.contrastive.size(), false);
}

Tape::Node BoundNetwork::classifier_head(Tape::Node features) const {
    return stack(features, params_.encoder.size() + params_.contrastive.size(), params_.classifier.size(), false);
}

std::vector<std::optional<Matrix>> BoundNetwork::gradients() const {
    std::vector<std::optional<Matrix>> out;
    out.reserve(nodes_.size());
    for (auto n : nodes_) {
        if (tape_.reached(n)) {
            out.emplace_back(tape_.gradient(n));
        } else {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

} // namespace opal
