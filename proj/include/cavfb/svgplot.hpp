#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv.hpp"

namespace cavfb {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

// Minimal SVG line chart: convenience output only, the CSV files are the
// authoritative data. Non-finite points are skipped; log-y drops y <= 0.
inline void write_line_svg(const std::string& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<PlotSeries>& series, bool log_y = false) {
    const double W = 720, H = 480, L = 70, R = 20, T = 36, B = 48;
    const double inf = std::numeric_limits<double>::infinity();
    double xmin = inf, xmax = -inf, ymin = inf, ymax = -inf;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            double yv = s.y[i];
            if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) continue;
            if (log_y) {
                if (!(yv > 0.0)) continue;
                yv = std::log10(yv);
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, yv);
            ymax = std::max(ymax, yv);
        }
    }
    if (!(xmax >= xmin) || !(ymax >= ymin)) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
    if (xmax == xmin) { xmax += 0.5; xmin -= 0.5; }
    if (ymax == ymin) { ymax += 0.5; ymin -= 0.5; }

    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "' viewBox='0 0 " << W << " " << H << "'>\n"
       << "<rect width='100%' height='100%' fill='white'/>\n"
       << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>"
       << title << "</text>\n"
       << "<text x='" << W / 2 << "' y='" << H - 10 << "' text-anchor='middle' font-size='12'>"
       << xlabel << "</text>\n"
       << "<text x='16' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
       << H / 2 << ")'>" << ylabel << (log_y ? " (log10)" : "") << "</text>\n";

    // frame and ticks
    os << "<rect x='" << L << "' y='" << T << "' width='" << W - L - R << "' height='"
       << H - T - B << "' fill='none' stroke='black'/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4;
        const double yv = ymin + (ymax - ymin) * k / 4;
        os << "<line x1='" << px(xv) << "' y1='" << H - B << "' x2='" << px(xv) << "' y2='"
           << H - B + 4 << "' stroke='black'/>\n"
           << "<text x='" << px(xv) << "' y='" << H - B + 16
           << "' text-anchor='middle' font-size='10'>" << format_number(xv) << "</text>\n"
           << "<line x1='" << L - 4 << "' y1='" << py(yv) << "' x2='" << L << "' y2='" << py(yv)
           << "' stroke='black'/>\n"
           << "<text x='" << L - 6 << "' y='" << py(yv) + 3
           << "' text-anchor='end' font-size='10'>" << format_number(yv) << "</text>\n";
    }

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b"};
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = colors[si % 6];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            double yv = s.y[i];
            if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) continue;
            if (log_y) {
                if (!(yv > 0.0)) continue;
                yv = std::log10(yv);
            }
            if (!pts.empty()) pts += ' ';
            pts += format_number(px(s.x[i])) + "," + format_number(py(yv));
        }
        os << "<polyline points='" << pts << "' fill='none' stroke='" << color
           << "' stroke-width='1.5'/>\n";
        os << "<text x='" << W - R - 8 << "' y='" << T + 16 + 14 * double(si)
           << "' text-anchor='end' font-size='11' fill='" << color << "'>" << s.label
           << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace cavfb
