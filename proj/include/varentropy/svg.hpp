#pragma once

#include <string>
#include <vector>

namespace varentropy {

struct Series {
    std::string label;
    std::vector<double> y;
};

/// Minimal SVG line chart, all series against one shared x axis.
std::string svg_line_chart(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series);

}  // namespace varentropy
