#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "opal/matrix.hpp"

namespace opal {

using SampleId = std::int64_t;
using ClassIndex = int;

enum class DatasetFormat { FeatureCsv, BinaryMatrix };

// Raised for every malformed-input condition; `kind` is a stable tag
// ("missing_file", "ragged_row", "non_contiguous_classes", ...) used in
// machine-readable CLI errors.
class DatasetError : public std::runtime_error {
public:
    DatasetError(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

struct Sample {
    SampleId id = 0;
    std::vector<double> features;
    std::optional<std::string> payload_ref;
};

// Feature matrix plus hidden ground truth. Row i of `features` belongs to
// `ids[i]`; `index_of` maps back.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<SampleId> ids, Matrix features, std::vector<ClassIndex> labels,
            std::vector<std::string> payload_refs = {});

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return features_.cols(); }
    int num_classes() const { return num_classes_; }

    const std::vector<SampleId>& ids() const { return ids_; }
    const Matrix& features() const { return features_; }
    std::span<const double> features_of(SampleId id) const { return features_.row(index_of(id)); }
    ClassIndex label_of(SampleId id) const { return labels_[index_of(id)]; }
    const std::vector<ClassIndex>& labels() const { return labels_; }
    std::optional<std::string> payload_ref(SampleId id) const;

    std::size_t index_of(SampleId id) const;
    bool contains(SampleId id) const { return index_.contains(id); }

    Sample sample(SampleId id) const;

    // Gathers rows for `ids` into a new matrix, in order.
    Matrix gather(std::span<const SampleId> ids) const;

    std::vector<std::size_t> class_counts() const;

private:
    std::vector<SampleId> ids_;
    Matrix features_;
    std::vector<ClassIndex> labels_;
    std::vector<std::string> payload_refs_;
    std::unordered_map<SampleId, std::size_t> index_;
    int num_classes_ = 0;
};

// Loads `path`. `min_folds` enforces n >= min_folds * m.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, int min_folds = 3);
DatasetFormat format_from_string(const std::string& name);
std::string to_string(DatasetFormat format);

void save_feature_csv(const Dataset& ds, const std::filesystem::path& path);
void save_binary_matrix(const Dataset& ds, const std::filesystem::path& path);

} // namespace opal
