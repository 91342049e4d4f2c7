#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "opal/network.hpp"
#include "opal/optimizer.hpp"

namespace opal {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NetworkCheckpoint {
    NetworkParams params;
    OptimizerState optimizer;
};

// Blob layout (little-endian):
//   "OPALNET" u32 version u32 dtype(8 = f64)
//   u32 len, arch JSON
//   per tensor: row-major values
//   u64 step, u64 total_steps, f64 lr0, f64 momentum, f64 weight_decay, u8 nesterov
//   per tensor: velocity values
std::string serialize_network(const NetworkParams& params, const OptimizerState& optimizer);
// Rejects blobs whose arch differs from `expected` when it is given.
NetworkCheckpoint deserialize_network(const std::string& blob, const std::optional<Arch>& expected = std::nullopt);

void save_network(const std::filesystem::path& path, const NetworkParams& params, const OptimizerState& optimizer);
NetworkCheckpoint load_network(const std::filesystem::path& path, const std::optional<Arch>& expected = std::nullopt);

// Writes via a temporary file and rename so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

} // namespace opal
