#include "cdt/nav_episode.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cdt::nav {

SddScript ingest_sdd(std::istream& in, double scale, std::size_t frame_stride) {
    if (!(scale > 0.0)) throw std::invalid_argument("sdd: scale must be > 0");
    if (frame_stride == 0) throw std::invalid_argument("sdd: frame_stride must be >= 1");

    SddScript script;
    std::map<long long, std::vector<PedestrianObs>> by_frame;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        long long id = 0, frame = 0;
        double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
        int lost = 0, occluded = 0, generated = 0;
        std::string label;
        if (!(fields >> id >> xmin >> ymin >> xmax >> ymax >> frame >> lost >> occluded >> generated >> label))
            throw std::runtime_error("sdd row " + std::to_string(row) + ": expected 10 fields");
        if (frame < 0) throw std::runtime_error("sdd row " + std::to_string(row) + ": negative frame");
        if (label.size() >= 2 && label.front() == '"' && label.back() == '"') label = label.substr(1, label.size() - 2);
        if (label != "Pedestrian") {
            ++script.skipped_labels;
            continue;
        }
        if (lost != 0) {
            ++script.lost_rows;
            continue;
        }
        const Vec2 center(0.5 * (xmin + xmax) * scale, 0.5 * (ymin + ymax) * scale);
        by_frame[frame].push_back({static_cast<int>(id), center});
    }
    if (by_frame.empty()) return script;

    const long long first = by_frame.begin()->first;
    const long long last = by_frame.rbegin()->first;
    const auto stride = static_cast<long long>(frame_stride);
    script.first_frame = static_cast<std::size_t>(first);
    script.frames.resize(static_cast<std::size_t>((last - first) / stride) + 1);
    for (auto& [frame, peds] : by_frame) {
        if ((frame - first) % stride != 0) continue;
        script.frames[static_cast<std::size_t>((frame - first) / stride)] = std::move(peds);
    }
    return script;
}

SddScript ingest_sdd_file(const std::string& path, double scale, std::size_t frame_stride) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open SDD annotations '" + path + "'");
    return ingest_sdd(in, scale, frame_stride);
}

}  // namespace cdt::nav
