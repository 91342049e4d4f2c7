#include "opal/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "opal/losses.hpp"

namespace opal {

Tape::Node Tape::push(Matrix value, std::vector<Node> inputs, bool needs_grad,
                      std::function<void(Tape&, Node)> backward) {
    nodes_.push_back(Record{std::move(value), {}, needs_grad, false, std::move(inputs), std::move(backward)});
    return nodes_.size() - 1;
}

Matrix& Tape::grad_of(Node n) {
    auto& rec = nodes_[n];
    if (rec.grad.empty() && !rec.value.empty()) rec.grad = Matrix(rec.value.rows(), rec.value.cols());
    rec.reached = true;
    return rec.grad;
}

Tape::Node Tape::constant(Matrix value) { return push(std::move(value), {}, false, nullptr); }

Tape::Node Tape::parameter(const Matrix& value) { return push(value, {}, true, nullptr); }

Tape::Node Tape::dense(Node x, Node weight, Node bias) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(weight);
    const Matrix& bv = value(bias);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
        throw std::invalid_argument("dense: shape mismatch");
    }
    Matrix out = matmul(xv, wv);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
    }
    const bool needs = nodes_[x].needs_grad || nodes_[weight].needs_grad || nodes_[bias].needs_grad;
    return push(std::move(out), {x, weight, bias}, needs, [x, weight, bias](Tape& t, Node self) {
        const Matrix& dy = t.nodes_[self].grad;
        if (t.nodes_[x].needs_grad) {
            Matrix dx = matmul_nt(dy, t.value(weight));
            auto& gx = t.grad_of(x);
            for (std::size_t k = 0; k < dx.size(); ++k) gx.data()[k] += dx.data()[k];
        }
        if (t.nodes_[weight].needs_grad) {
            Matrix dw = matmul_tn(t.value(x), dy);
            auto& gw = t.grad_of(weight);
            for (std::size_t k = 0; k < dw.size(); ++k) gw.data()[k] += dw.data()[k];
        }
        if (t.nodes_[bias].needs_grad) {
            auto& gb = t.grad_of(bias);
            for (std::size_t i = 0; i < dy.rows(); ++i) {
                for (std::size_t j = 0; j < dy.cols(); ++j) gb(0, j) += dy(i, j);
            }
        }
    });
}

Tape::Node Tape::relu(Node x) {
    Matrix out = value(x);
    for (auto& v : out.data()) {
        kink_distance_ = std::min(kink_distance_, std::abs(v));
        v = v > 0.0 ? v : 0.0;
    }
    return push(std::move(out), {x}, nodes_[x].needs_grad, [x](Tape& t, Node self) {
        const Matrix& dy = t.nodes_[self].grad;
        const Matrix& in = t.value(x);
        auto& gx = t.grad_of(x);
        for (std::size_t k = 0; k < dy.size(); ++k) {
            if (in.data()[k] > 0.0) gx.data()[k] += dy.data()[k];
        }
    });
}

Tape::Node Tape::contrastive(Node z1, Node z2, std::span<const SamplePair> pairs, double tau, double margin) {
    const Matrix& a = value(z1);
    const Matrix& b = value(z2);
    if (a.cols() != b.cols()) throw std::invalid_argument("contrastive: dimension mismatch");
    if (margin <= 0.0) throw std::invalid_argument("contrastive: margin must be positive");
    std::vector<SamplePair> kept(pairs.begin(), pairs.end());
    std::vector<double> dist(kept.size());
    double total = 0.0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        dist[i] = contrastive_distance(a.row(kept[i].first), b.row(kept[i].second));
        if (kept[i].dissimilar != 0) kink_distance_ = std::min(kink_distance_, std::abs(margin - dist[i]));
        total += pair_contrastive_term(kept[i].dissimilar, dist[i], tau, margin);
    }
    Matrix out(1, 1, total);
    const bool needs = nodes_[z1].needs_grad || nodes_[z2].needs_grad;
    return push(std::move(out), {z1, z2}, needs,
                [z1, z2, kept = std::move(kept), dist = std::move(dist), tau, margin](Tape& t, Node self) {
                    const double seed = t.nodes_[self].grad(0, 0);
                    const Matrix& a = t.value(z1);
                    const Matrix& b = t.value(z2);
                    auto& ga = t.grad_of(z1);
                    auto& gb = t.grad_of(z2);
                    const std::size_t k = a.cols();
                    for (std::size_t i = 0; i < kept.size(); ++i) {
                        const auto& p = kept[i];
                        // d(term)/d(diff) where diff = a[first] - b[second]
                        double coef;
                        if (p.dissimilar == 0) {
                            coef = tau;
                        } else if (dist[i] < margin && dist[i] > 0.0) {
                            coef = -(margin - dist[i]) / dist[i];
                        } else {
                            continue;  // hinge inactive, or direction undefined at D = 0
                        }
                        coef *= seed;
                        auto ar = a.row(p.first);
                        auto br = b.row(p.second);
                        for (std::size_t c = 0; c < k; ++c) {
                            const double g = coef * (ar[c] - br[c]);
                            ga(p.first, c) += g;
                            gb(p.second, c) -= g;
                        }
                    }
                });
}

Tape::Node Tape::softmax_cross_entropy(Node logits, std::span<const ClassIndex> labels) {
    const Matrix& q = value(logits);
    std::vector<ClassIndex> y(labels.begin(), labels.end());
    Matrix out(1, 1, supervised_loss(q, y));
    return push(std::move(out), {logits}, nodes_[logits].needs_grad, [logits, y = std::move(y)](Tape& t, Node self) {
        const double seed = t.nodes_[self].grad(0, 0);
        const Matrix& q = t.value(logits);
        auto& g = t.grad_of(logits);
        const double inv_n = 1.0 / static_cast<double>(q.rows());
        for (std::size_t i = 0; i < q.rows(); ++i) {
            const auto p = softmax(q.row(i));
            for (std::size_t c = 0; c < q.cols(); ++c) {
                const double target = static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0;
                g(i, c) += seed * inv_n * (p[c] - target);
            }
        }
    });
}

Tape::Node Tape::add(Node a, Node b) {
    if (value(a).size() != 1 || value(b).size() != 1) throw std::invalid_argument("add: scalars only");
    Matrix out(1, 1, scalar(a) + scalar(b));
    const bool needs = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(out), {a, b}, needs, [a, b](Tape& t, Node self) {
        const double seed = t.nodes_[self].grad(0, 0);
        if (t.nodes_[a].needs_grad) t.grad_of(a)(0, 0) += seed;
        if (t.nodes_[b].needs_grad) t.grad_of(b)(0, 0) += seed;
    });
}

void Tape::backward(Node root) {
    for (auto& rec : nodes_) {
        rec.grad = Matrix();
        rec.reached = false;
    }
    grad_of(root)(0, 0) = 1.0;
    for (std::size_t n = root + 1; n-- > 0;) {
        auto& rec = nodes_[n];
        if (!rec.reached || !rec.needs_grad || !rec.backward) continue;
        rec.backward(*this, n);
    }
    // nodes never reached still report a zero gradient of the right shape
    for (auto& rec : nodes_) {
        if (rec.grad.empty() && !rec.value.empty()) rec.grad = Matrix(rec.value.rows(), rec.value.cols());
    }
}

} // namespace opal
