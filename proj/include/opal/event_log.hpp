#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace opal {

// Append-only JSON-lines log. Each line is flushed as it is written so a
// killed process leaves at most one torn line, which resume() cuts off.
class EventLog {
public:
    EventLog() = default;
    // Starts a fresh log, truncating any existing file.
    explicit EventLog(const std::filesystem::path& path);

    // Reopens `path` keeping only its first `bytes` bytes.
    static EventLog resume(const std::filesystem::path& path, std::uint64_t bytes, std::uint64_t lines);

    void append(const nlohmann::json& event);
    std::uint64_t bytes() const { return bytes_; }
    std::uint64_t lines() const { return lines_; }
    bool is_open() const { return out_.is_open(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint64_t bytes_ = 0;
    std::uint64_t lines_ = 0;
};

std::vector<nlohmann::json> read_events(const std::filesystem::path& path);

} // namespace opal
