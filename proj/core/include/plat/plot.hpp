#pragma once

#include <string>
#include <vector>

namespace plat {

// Minimal SVG chart writer for the analysis CSVs; no external dependencies.
struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, bool scatter);

}  // namespace plat
