#include "opal/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace opal {

namespace {

constexpr std::string_view kMagic = "OPALNET";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF64 = 8;

class Writer {
public:
    template <class T>
    void put(T value) {
        std::array<char, sizeof(T)> buf{};
        std::memcpy(buf.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
        out_.append(buf.data(), buf.size());
    }
    void put_bytes(std::string_view bytes) { out_.append(bytes); }
    void put_matrix(const Matrix& m) {
        for (double v : m.data()) put(v);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}
    template <class T>
    T get() {
        need(sizeof(T));
        std::array<char, sizeof(T)> buf{};
        std::memcpy(buf.data(), data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
        T value;
        std::memcpy(&value, buf.data(), sizeof(T));
        return value;
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void get_matrix(Matrix& m) {
        for (auto& v : m.data()) v = get<double>();
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw CheckpointError("network checkpoint truncated");
    }
    const std::string& data_;
    std::size_t pos_ = 0;
};

} // namespace

std::string serialize_network(const NetworkParams& params, const OptimizerState& optimizer) {
    Writer w;
    w.put_bytes(kMagic);
    w.put(kVersion);
    w.put(kDtypeF64);
    const std::string arch = params.arch.to_json().dump();
    w.put(static_cast<std::uint32_t>(arch.size()));
    w.put_bytes(arch);
    for (const auto* t : params.tensors()) w.put_matrix(*t);
    w.put(static_cast<std::uint64_t>(optimizer.step));
    w.put(static_cast<std::uint64_t>(optimizer.total_steps));
    w.put(optimizer.lr0);
    w.put(optimizer.momentum);
    w.put(optimizer.weight_decay);
    w.put(static_cast<std::uint8_t>(optimizer.nesterov ? 1 : 0));
    for (const auto& v : optimizer.velocity) w.put_matrix(v);
    return w.take();
}

NetworkCheckpoint deserialize_network(const std::string& blob, const std::optional<Arch>& expected) {
    Reader r(blob);
    if (r.get_bytes(kMagic.size()) != kMagic) throw CheckpointError("not a network checkpoint");
    if (const auto version = r.get<std::uint32_t>(); version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    if (r.get<std::uint32_t>() != kDtypeF64) throw CheckpointError("unsupported tensor dtype");
    const auto arch_len = r.get<std::uint32_t>();
    Arch arch;
    try {
        arch = Arch::from_json(nlohmann::json::parse(r.get_bytes(arch_len)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt arch header: ") + e.what());
    }
    if (expected && !(*expected == arch)) {
        throw CheckpointError("checkpoint arch " + arch.to_json().dump() + " does not match expected " +
                              expected->to_json().dump());
    }
    NetworkCheckpoint ck;
    ck.params = init_params(arch, 0);
    for (auto* t : ck.params.tensors()) r.get_matrix(*t);
    ck.optimizer = OptimizerState::for_params(ck.params, 0, 0.0);
    ck.optimizer.step = r.get<std::uint64_t>();
    ck.optimizer.total_steps = r.get<std::uint64_t>();
    ck.optimizer.lr0 = r.get<double>();
    ck.optimizer.momentum = r.get<double>();
    ck.optimizer.weight_decay = r.get<double>();
    ck.optimizer.nesterov = r.get<std::uint8_t>() != 0;
    for (auto& v : ck.optimizer.velocity) r.get_matrix(v);
    if (!r.done()) throw CheckpointError("trailing bytes in network checkpoint");
    return ck;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_network(const std::filesystem::path& path, const NetworkParams& params, const OptimizerState& optimizer) {
    write_file_atomic(path, serialize_network(params, optimizer));
}

NetworkCheckpoint load_network(const std::filesystem::path& path, const std::optional<Arch>& expected) {
    return deserialize_network(read_file(path), expected);
}

} // namespace opal
