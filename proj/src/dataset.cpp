#include "opal/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace opal {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
        out.push_back(cell);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view text, const std::string& where) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw DatasetError("parse_error", where + ": cannot parse '" + std::string(text) + "'");
    }
    return value;
}

void check_classes(const std::vector<ClassIndex>& labels, int declared, int min_folds) {
    std::set<ClassIndex> seen(labels.begin(), labels.end());
    if (seen.empty()) throw DatasetError("empty_dataset", "dataset has no rows");
    if (*seen.begin() < 0) throw DatasetError("non_contiguous_classes", "negative class index");
    const int m = *seen.rbegin() + 1;
    if (static_cast<int>(seen.size()) != m || (declared >= 0 && declared != m)) {
        throw DatasetError("non_contiguous_classes",
                           "class indices must be contiguous from 0; found " + std::to_string(seen.size()) +
                               " distinct labels with max " + std::to_string(m - 1));
    }
    if (labels.size() < static_cast<std::size_t>(min_folds) * static_cast<std::size_t>(m)) {
        throw DatasetError("too_few_samples", "need at least folds*classes = " +
                                                  std::to_string(min_folds * m) + " samples, got " +
                                                  std::to_string(labels.size()));
    }
}

Dataset load_csv(const std::filesystem::path& path, int min_folds) {
    std::ifstream in(path);
    if (!in) throw DatasetError("missing_file", "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty_dataset", path.string() + " is empty");
    auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
        throw DatasetError("bad_header", "expected header id,label,f0..f{d-1}");
    }
    const std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j + 2] != "f" + std::to_string(j)) {
            throw DatasetError("bad_header", "feature column " + std::to_string(j) + " must be named f" +
                                                 std::to_string(j));
        }
    }

    std::vector<SampleId> ids;
    std::vector<ClassIndex> labels;
    std::vector<double> values;
    std::vector<std::string> refs;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv(line);
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        if (cells.size() != d + 2) {
            throw DatasetError("ragged_row", where + ": expected " + std::to_string(d) + " features, got " +
                                                 std::to_string(cells.size() >= 2 ? cells.size() - 2 : 0));
        }
        ids.push_back(parse_number<SampleId>(cells[0], where));
        labels.push_back(parse_number<ClassIndex>(cells[1], where));
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number<double>(cells[j + 2], where));
        refs.push_back(where);
    }
    check_classes(labels, -1, min_folds);
    Matrix features(ids.size(), d);
    features.data() = std::move(values);
    return Dataset(std::move(ids), std::move(features), std::move(labels), std::move(refs));
}

template <class T>
T read_le(std::istream& in) {
    std::array<char, sizeof(T)> buf{};
    in.read(buf.data(), buf.size());
    if (!in) throw DatasetError("truncated", "binary matrix truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    T value;
    std::memcpy(&value, buf.data(), sizeof(T));
    return value;
}

template <class T>
void write_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> buf{};
    std::memcpy(buf.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    out.write(buf.data(), buf.size());
}

constexpr std::string_view kBinaryMagic = "OPAL1";

Dataset load_binary(const std::filesystem::path& path, int min_folds) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("missing_file", "cannot open " + path.string());
    std::array<char, 5> magic{};
    in.read(magic.data(), magic.size());
    if (!in || std::string_view(magic.data(), magic.size()) != kBinaryMagic) {
        throw DatasetError("bad_magic", path.string() + " is not an OPAL1 binary matrix");
    }
    const auto n = read_le<std::uint32_t>(in);
    const auto d = read_le<std::uint32_t>(in);
    const auto m = read_le<std::uint32_t>(in);
    if (d == 0) throw DatasetError("ragged_row", "zero feature dimension");
    std::vector<SampleId> ids(n);
    std::vector<ClassIndex> labels(n);
    Matrix features(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
        ids[i] = i;
        for (std::uint32_t j = 0; j < d; ++j) features(i, j) = static_cast<double>(read_le<float>(in));
        labels[i] = read_le<std::int32_t>(in);
    }
    in.peek();
    if (!in.eof()) throw DatasetError("ragged_row", "trailing bytes after " + std::to_string(n) + " rows");
    check_classes(labels, static_cast<int>(m), min_folds);
    return Dataset(std::move(ids), std::move(features), std::move(labels));
}

} // namespace

Dataset::Dataset(std::vector<SampleId> ids, Matrix features, std::vector<ClassIndex> labels,
                 std::vector<std::string> payload_refs)
    : ids_(std::move(ids)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      payload_refs_(std::move(payload_refs)) {
    if (ids_.size() != features_.rows() || ids_.size() != labels_.size()) {
        throw DatasetError("shape_mismatch", "ids, features and labels must have the same length");
    }
    if (!payload_refs_.empty() && payload_refs_.size() != ids_.size()) {
        throw DatasetError("shape_mismatch", "payload_refs length mismatch");
    }
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw DatasetError("duplicate_id", "duplicate sample id " + std::to_string(ids_[i]));
        }
        num_classes_ = std::max(num_classes_, labels_[i] + 1);
    }
}

std::size_t Dataset::index_of(SampleId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown sample id " + std::to_string(id));
    return it->second;
}

std::optional<std::string> Dataset::payload_ref(SampleId id) const {
    if (payload_refs_.empty()) return std::nullopt;
    return payload_refs_[index_of(id)];
}

Sample Dataset::sample(SampleId id) const {
    auto row = features_of(id);
    return Sample{id, {row.begin(), row.end()}, payload_ref(id)};
}

Matrix Dataset::gather(std::span<const SampleId> ids) const {
    Matrix out(ids.size(), dim());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto src = features_of(ids[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
    for (auto y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, int min_folds) {
    if (!std::filesystem::exists(path)) throw DatasetError("missing_file", "no such file: " + path.string());
    return format == DatasetFormat::FeatureCsv ? load_csv(path, min_folds) : load_binary(path, min_folds);
}

DatasetFormat format_from_string(const std::string& name) {
    if (name == "feature-csv" || name == "csv") return DatasetFormat::FeatureCsv;
    if (name == "binary-matrix" || name == "binary") return DatasetFormat::BinaryMatrix;
    throw DatasetError("bad_format", "unknown dataset format '" + name + "'");
}

std::string to_string(DatasetFormat format) {
    return format == DatasetFormat::FeatureCsv ? "feature-csv" : "binary-matrix";
}

void save_feature_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError("io_error", "cannot write " + path.string());
    out << "id,label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.ids()[i] << ',' << ds.labels()[i];
        for (double v : ds.features().row(i)) out << ',' << v;
        out << '\n';
    }
}

void save_binary_matrix(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("io_error", "cannot write " + path.string());
    out.write(kBinaryMagic.data(), static_cast<std::streamsize>(kBinaryMagic.size()));
    write_le(out, static_cast<std::uint32_t>(ds.size()));
    write_le(out, static_cast<std::uint32_t>(ds.dim()));
    write_le(out, static_cast<std::uint32_t>(ds.num_classes()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.features().row(i)) write_le(out, static_cast<float>(v));
        write_le(out, static_cast<std::int32_t>(ds.labels()[i]));
    }
}

} // namespace opal
