#include "opal/event_log.hpp"

#include <stdexcept>

namespace opal {

EventLog::EventLog(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open event log " + path.string());
}

EventLog EventLog::resume(const std::filesystem::path& path, std::uint64_t bytes, std::uint64_t lines) {
    if (!std::filesystem::exists(path)) {
        if (bytes != 0) throw std::runtime_error("event log " + path.string() + " is missing");
        return EventLog(path);
    }
    if (std::filesystem::file_size(path) < bytes) {
        throw std::runtime_error("event log " + path.string() + " is shorter than the checkpoint records");
    }
    std::filesystem::resize_file(path, bytes);
    EventLog log;
    log.path_ = path;
    log.out_.open(path, std::ios::binary | std::ios::app);
    if (!log.out_) throw std::runtime_error("cannot reopen event log " + path.string());
    log.bytes_ = bytes;
    log.lines_ = lines;
    return log;
}

void EventLog::append(const nlohmann::json& event) {
    if (!out_.is_open()) return;
    const std::string line = event.dump() + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw std::runtime_error("write to event log " + path_.string() + " failed");
    bytes_ += line.size();
    ++lines_;
}

std::vector<nlohmann::json> read_events(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open event log " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

} // namespace opal
