#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "opal/dataset.hpp"
#include "opal/matrix.hpp"
#include "opal/opf.hpp"

namespace opal {

struct ProjectionRow {
    SampleId id = 0;
    double x = 0.0;
    double y = 0.0;
    std::string state;            // seed, oracle, pseudo or unlabeled
    ClassIndex label_or_pseudo = 0;
    double confidence = 1.0;
};

// id,x,y,state,label_or_pseudo,confidence
void write_projection_csv(const std::filesystem::path& path, const std::vector<ProjectionRow>& rows);
std::vector<ProjectionRow> read_projection_csv(const std::filesystem::path& path);

// id,pseudo_label,cost,runner_up,confidence,root (runner_up empty when undefined)
void write_propagation_csv(const std::filesystem::path& path, const PropagationResult& prop);

// Round-trip text form of a double.
std::string format_double(double v);

} // namespace opal
