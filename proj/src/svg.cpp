#include "varentropy/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace varentropy {

namespace {

constexpr double width = 720.0, height = 420.0, margin = 56.0;
constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series) {
    double x0 = x.empty() ? 0.0 : x.front(), x1 = x.empty() ? 1.0 : x.back();
    double y0 = 0.0, y1 = 0.0;
    for (const auto& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) {
                y0 = std::min(y0, v);
                y1 = std::max(y1, v);
            }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    const auto px = [&](double v) { return margin + (v - x0) / (x1 - x0) * (width - 2 * margin); };
    const auto py = [&](double v) { return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n"
       << "<line x1=\"" << margin << "\" y1=\"" << py(0.0) << "\" x2=\"" << width - margin << "\" y2=\"" << py(0.0)
       << "\" stroke=\"#999\"/>\n"
       << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
       << "\" stroke=\"#999\"/>\n"
       << "<text x=\"" << margin << "\" y=\"" << height - margin + 18 << "\" font-size=\"11\">" << num(x0) << "</text>\n"
       << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18 << "\" font-size=\"11\">" << num(x1)
       << "</text>\n"
       << "<text x=\"4\" y=\"" << margin << "\" font-size=\"11\">" << num(y1) << "</text>\n"
       << "<text x=\"4\" y=\"" << height - margin << "\" font-size=\"11\">" << num(y0) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* colour = palette[k % std::size(palette)];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        const std::size_t n = std::min(x.size(), series[k].y.size());
        for (std::size_t i = 0; i < n; ++i)
            if (std::isfinite(series[k].y[i])) os << px(x[i]) << ',' << py(series[k].y[i]) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << width - margin - 150 << "\" y=\"" << margin + 16 * k << "\" font-size=\"12\" fill=\""
           << colour << "\">" << series[k].label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace varentropy
