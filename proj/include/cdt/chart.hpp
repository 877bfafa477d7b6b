#pragma once

// Static SVG line charts from trace CSVs. One panel per channel, stacked
// vertically. With several traces every trace is drawn as a faint line and
// their pointwise mean on top.

#include "cdt/csv.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cdt::chart {

struct ChartOptions {
    std::vector<std::string> channels;
    std::optional<double> ref_line;  // horizontal dashed line on every panel
    std::string title;
    int width = 800;
    int panel_height = 260;
    std::size_t max_points = 1500;  // per series, thinned by stride beyond this
};

// Throws std::invalid_argument when a channel is missing from a trace; the
// message lists the channels that trace does have.
std::string render(const std::vector<csv::Table>& traces, const std::vector<std::string>& names,
                   const ChartOptions& options);

std::string render_files(const std::vector<std::string>& paths, const ChartOptions& options);

// Columns usable as channels: everything except the x column `t`.
std::vector<std::string> available_channels(const csv::Table& trace);

}  // namespace cdt::chart
