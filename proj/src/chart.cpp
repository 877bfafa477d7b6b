#include "cdt/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cdt::chart {

namespace {

constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kPanelGap = 40;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Series {
    std::vector<double> x, y;
};

Series extract(const csv::Table& table, const std::string& channel) {
    Series s;
    s.y = table.numeric_column(channel);
    if (table.has_column("t")) {
        s.x = table.numeric_column("t");
    } else {
        s.x.resize(s.y.size());
        for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] = static_cast<double>(i + 1);
    }
    return s;
}

// Pointwise mean over the traces that reach each index.
Series mean_series(const std::vector<Series>& all) {
    std::size_t longest = 0;
    for (const auto& s : all) longest = std::max(longest, s.y.size());
    Series m;
    for (std::size_t i = 0; i < longest; ++i) {
        double sum = 0.0, x = 0.0;
        std::size_t n = 0;
        for (const auto& s : all) {
            if (i >= s.y.size() || !std::isfinite(s.y[i])) continue;
            sum += s.y[i];
            x = s.x[i];
            ++n;
        }
        if (n == 0) continue;
        m.x.push_back(x);
        m.y.push_back(sum / static_cast<double>(n));
    }
    return m;
}

}  // namespace

std::vector<std::string> available_channels(const csv::Table& trace) {
    std::vector<std::string> out;
    for (const auto& h : trace.header)
        if (h != "t") out.push_back(h);
    return out;
}

std::string render(const std::vector<csv::Table>& traces, const std::vector<std::string>& names,
                   const ChartOptions& options) {
    if (traces.empty()) throw std::invalid_argument("chart needs at least one trace");
    if (options.channels.empty()) throw std::invalid_argument("chart needs at least one channel");
    for (std::size_t i = 0; i < traces.size(); ++i) {
        for (const auto& c : options.channels) {
            if (traces[i].has_column(c)) continue;
            std::string available;
            for (const auto& a : available_channels(traces[i])) available += (available.empty() ? "" : ", ") + a;
            const std::string who = i < names.size() ? names[i] : "trace " + std::to_string(i);
            throw std::invalid_argument(who + " has no channel '" + c + "'; available: " + available);
        }
    }

    const int plot_w = options.width - kMarginLeft - kMarginRight;
    const int ph = options.panel_height;
    const int height = kMarginTop + static_cast<int>(options.channels.size()) * (ph + kPanelGap);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << options.width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!options.title.empty())
        svg << "<text x=\"" << options.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
            << escape(options.title) << "</text>\n";

    for (std::size_t p = 0; p < options.channels.size(); ++p) {
        const auto& channel = options.channels[p];
        std::vector<Series> series;
        for (const auto& t : traces) series.push_back(extract(t, channel));
        const bool multi = series.size() > 1;
        const Series mean = multi ? mean_series(series) : Series{};

        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        for (const auto& s : series)
            for (std::size_t i = 0; i < s.y.size(); ++i) {
                if (!std::isfinite(s.y[i])) continue;
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, s.y[i]);
                y1 = std::max(y1, s.y[i]);
            }
        if (options.ref_line) {
            y0 = std::min(y0, *options.ref_line);
            y1 = std::max(y1, *options.ref_line);
        }
        if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
        if (x1 == x0) x1 = x0 + 1.0;
        if (y1 == y0) y0 -= 0.5, y1 += 0.5;
        const double pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;

        const int top = kMarginTop + static_cast<int>(p) * (ph + kPanelGap);
        const auto sx = [&](double x) { return kMarginLeft + (x - x0) / (x1 - x0) * plot_w; };
        const auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

        svg << "<g>\n<rect x=\"" << kMarginLeft << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
            << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << num(y1)
            << "</text>\n";
        svg << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << num(y0)
            << "</text>\n";
        svg << "<text x=\"" << kMarginLeft << "\" y=\"" << top + ph + 14 << "\">" << num(x0) << "</text>\n";
        svg << "<text x=\"" << kMarginLeft + plot_w << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"end\">"
            << num(x1) << "</text>\n";
        svg << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << top - 6 << "\" text-anchor=\"middle\">"
            << escape(channel) << "</text>\n";

        const auto polyline = [&](const Series& s, const char* style) {
            const std::size_t stride = std::max<std::size_t>(1, (s.y.size() + options.max_points - 1) / options.max_points);
            svg << "<polyline fill=\"none\" " << style << " points=\"";
            bool first = true;
            for (std::size_t i = 0; i < s.y.size(); i += stride) {
                if (!std::isfinite(s.y[i])) continue;
                svg << (first ? "" : " ") << num(sx(s.x[i])) << ',' << num(sy(s.y[i]));
                first = false;
            }
            svg << "\"/>\n";
        };
        for (const auto& s : series)
            polyline(s, multi ? "stroke=\"#1f77b4\" stroke-opacity=\"0.15\" stroke-width=\"1\""
                              : "stroke=\"#1f77b4\" stroke-width=\"1.5\"");
        if (multi) polyline(mean, "stroke=\"#08306b\" stroke-width=\"2\"");
        if (options.ref_line) {
            const double y = sy(*options.ref_line);
            svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << num(y) << "\" x2=\"" << kMarginLeft + plot_w
                << "\" y2=\"" << num(y) << "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
        }
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_files(const std::vector<std::string>& paths, const ChartOptions& options) {
    std::vector<csv::Table> traces;
    for (const auto& p : paths) traces.push_back(csv::read_file(p));
    return render(traces, paths, options);
}

}  // namespace cdt::chart
