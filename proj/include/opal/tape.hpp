#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "opal/batching.hpp"
#include "opal/matrix.hpp"

namespace opal {

// Minimal reverse-mode differentiation over a recorded list of dense ops.
// Nodes are appended in evaluation order, so replaying the list backwards
// is a valid topological order.
class Tape {
public:
    using Node = std::size_t;

    Node constant(Matrix value);
    // A leaf whose gradient is reported back through `gradient(node)`.
    Node parameter(const Matrix& value);

    // x: n x in, weight: in x out, bias: 1 x out  ->  n x out
    Node dense(Node x, Node weight, Node bias);
    Node relu(Node x);
    // Weighted contrastive loss summed over pairs; z1 rows feed the first
    // member of each pair, z2 rows the second. Scalar result.
    Node contrastive(Node z1, Node z2, std::span<const SamplePair> pairs, double tau, double margin);
    // Mean softmax cross-entropy of logits (n x m) against labels. Scalar.
    Node softmax_cross_entropy(Node logits, std::span<const ClassIndex> labels);
    // Scalar sum a + b.
    Node add(Node a, Node b);

    const Matrix& value(Node n) const { return nodes_[n].value; }
    double scalar(Node n) const { return nodes_[n].value(0, 0); }

    // Seeds d(root)/d(root) = 1 and propagates to every node that needs it.
    void backward(Node root);
    // Gradient accumulated at `n` by the last backward(); zero-filled if the
    // node did not influence the root.
    const Matrix& gradient(Node n) const { return nodes_[n].grad; }
    bool reached(Node n) const { return nodes_[n].reached; }

    // Smallest distance of any recorded non-smooth point (ReLU input at 0,
    // hinge at D = margin) from its kink. Finite-difference checks are only
    // meaningful when this exceeds the step size.
    double kink_distance() const { return kink_distance_; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Record {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        bool reached = false;
        std::vector<Node> inputs;
        std::function<void(Tape&, Node)> backward;
    };

    Node push(Matrix value, std::vector<Node> inputs, bool needs_grad,
              std::function<void(Tape&, Node)> backward);
    Matrix& grad_of(Node n);

    std::vector<Record> nodes_;
    double kink_distance_ = std::numeric_limits<double>::infinity();
};

} // namespace opal
