#include "plat/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "plat/errors.hpp"

namespace plat {

namespace {
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}
}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series, bool scatter) {
    constexpr int w = 640, h = 420, ml = 60, mr = 130, mt = 40, mb = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.xs.size(); ++i) {
            if (first) {
                xmin = xmax = s.xs[i];
                ymin = ymax = s.ys[i];
                first = false;
            }
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double plot_w = w - ml - mr, plot_h = h - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * plot_h; };

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    f << "<rect width='" << w << "' height='" << h << "' fill='white'/>\n";
    f << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
    // axes
    f << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
    f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        f << "<text x='" << px(xv) << "' y='" << h - mb + 18
          << "' text-anchor='middle' font-size='11'>" << fmt(xv) << "</text>\n";
        f << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
          << "' text-anchor='end' font-size='11'>" << fmt(yv) << "</text>\n";
        f << "<line x1='" << ml << "' y1='" << py(yv) << "' x2='" << w - mr << "' y2='" << py(yv)
          << "' stroke='#dddddd'/>\n";
    }
    f << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
      << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    f << "<text x='16' y='" << (mt + h - mb) / 2 << "' font-size='12' transform='rotate(-90 16 "
      << (mt + h - mb) / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const auto& s = series[si];
        if (!scatter && s.xs.size() > 1) {
            f << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
            for (size_t i = 0; i < s.xs.size(); ++i)
                f << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
            f << "'/>\n";
        }
        for (size_t i = 0; i < s.xs.size(); ++i)
            f << "<circle cx='" << px(s.xs[i]) << "' cy='" << py(s.ys[i])
              << "' r='3' fill='" << color << "'/>\n";
        f << "<rect x='" << w - mr + 10 << "' y='" << mt + 18 * si << "' width='12' height='12' fill='"
          << color << "'/>\n";
        f << "<text x='" << w - mr + 27 << "' y='" << mt + 18 * si + 10 << "' font-size='12'>"
          << s.label << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace plat
