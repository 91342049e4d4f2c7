#include "opal/snapshot.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "opal/checkpoint.hpp"

namespace opal {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void write_projection_csv(const std::filesystem::path& path, const std::vector<ProjectionRow>& rows) {
    std::string out = "id,x,y,state,label_or_pseudo,confidence\n";
    for (const auto& r : rows) {
        out += std::to_string(r.id) + "," + format_double(r.x) + "," + format_double(r.y) + "," + r.state + "," +
               std::to_string(r.label_or_pseudo) + "," + format_double(r.confidence) + "\n";
    }
    write_file_atomic(path, out);
}

std::vector<ProjectionRow> read_projection_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "id,x,y,state,label_or_pseudo,confidence") throw std::runtime_error("bad projection header");
    std::vector<ProjectionRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[6];
        for (auto& s : f) std::getline(ss, s, ',');
        ProjectionRow r;
        r.id = std::stoll(f[0]);
        r.x = std::stod(f[1]);
        r.y = std::stod(f[2]);
        r.state = f[3];
        r.label_or_pseudo = std::stoi(f[4]);
        r.confidence = std::stod(f[5]);
        rows.push_back(r);
    }
    return rows;
}

void write_propagation_csv(const std::filesystem::path& path, const PropagationResult& prop) {
    std::string out = "id,pseudo_label,cost,runner_up,confidence,root\n";
    for (const auto& e : prop.entries) {
        out += std::to_string(e.id) + "," + std::to_string(e.pseudo_label) + "," + format_double(e.cost) + "," +
               (e.runner_up ? format_double(*e.runner_up) : std::string()) + "," + format_double(e.confidence) +
               "," + std::to_string(e.root) + "\n";
    }
    write_file_atomic(path, out);
}

} // namespace opal
