#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/matrix.hpp"

namespace opal {

class PropagationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Prototype {
    SampleId id = 0;
    ClassIndex label = 0;
};

// Which competitors count for the runner-up cost: any prototype other than
// the root, or only prototypes of another class.
enum class RunnerUpMode { Prototype, Class };

RunnerUpMode runner_up_mode_from_string(const std::string& s);
std::string to_string(RunnerUpMode mode);

struct PropagationEntry {
    SampleId id = 0;
    ClassIndex pseudo_label = 0;
    double cost = 0.0;                 // c(u)
    std::optional<double> runner_up;   // c'(u); empty when no competitor exists
    double confidence = 1.0;           // v(u)
    SampleId root = 0;
};

struct PropagationResult {
    std::vector<PropagationEntry> entries;  // one per non-prototype id, ascending id

    const PropagationEntry* find(SampleId id) const;
};

// c' / (c + c'), with 0.5 when both are 0 and 1 when c' is undefined.
// Throws std::invalid_argument if c' < c or c < 0.
double confidence(double c, std::optional<double> c_prime);

// 2D Euclidean arc weight; shared with tests so that costs compare exactly.
double arc_length(const Matrix& coords, std::size_t a, std::size_t b);

// Minimax (f_max) path costs from every prototype on the complete graph.
// Row k of the result holds the costs from prototypes[k] to every node.
// Computed from the Euclidean minimum spanning tree.
std::vector<std::vector<double>> prototype_bottlenecks(const Matrix& coords, std::span<const std::size_t> sources);

// Optimum-path costs c(u) = min over prototypes of the minimax path cost,
// by the image foresting transform seeded with all prototypes at cost 0.
std::vector<double> ift_costs(const Matrix& coords, std::span<const std::size_t> sources);

// Label propagation over the complete graph on `coords` (rows align with
// `ids`). Nodes not listed in `prototypes` receive the label of the
// prototype offering the cheapest path; ties go to the lowest prototype id.
PropagationResult propagate(const Matrix& coords, std::span<const SampleId> ids, std::span<const Prototype> prototypes,
                            RunnerUpMode mode = RunnerUpMode::Prototype);

} // namespace opal
