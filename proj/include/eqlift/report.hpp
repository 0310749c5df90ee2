#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "eqlift/checkpoint.hpp"
#include "eqlift/eval.hpp"

namespace eqlift {

// Deterministic number formatting for hashable artifacts.
inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> comments;  // emitted as "# ..." lines
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const {
        std::ostringstream out;
        for (const std::string& c : comments) out << "# " << c << "\n";
        for (std::size_t i = 0; i < header.size(); ++i)
            out << (i ? "," : "") << header[i];
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << (i ? "," : "") << row[i];
            out << "\n";
        }
        return out.str();
    }

    void write(const std::string& path) const { write_file_atomic(path, to_string()); }
};

// ---------------------------------------------------------------------------
// Standalone SVG line plots (polylines over a plain axis box).

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

inline std::string svg_line_plot(const std::vector<PlotSeries>& series,
                                 const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel,
                                 const std::string& footnote = "") {
    const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) xmin = 0, xmax = 1;
    if (ymin > ymax) ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b"};
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
        << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">" << title << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
        << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double x = xmin + (xmax - xmin) * i / 4;
        double y = ymin + (ymax - ymin) * i / 4;
        out << "<text x=\"" << px(x) << "\" y=\"" << h - mb + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt_num(x) << "</text>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt_num(y) << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 18
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        << xlabel << "</text>\n";
    out << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 " << (mt + h - mb) / 2 << ")\">" << ylabel
        << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.points.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"" << colors[si % 6]
            << "\" stroke-width=\"1.6\" points=\"";
        auto sorted = s.points;
        std::sort(sorted.begin(), sorted.end());
        for (auto [x, y] : sorted) out << px(x) << "," << py(y) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << w - mr - 6 << "\" y=\"" << mt + 16 * (si + 1)
            << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" "
               "fill=\"" << colors[si % 6] << "\">" << s.name << "</text>\n";
    }
    if (!footnote.empty())
        out << "<text x=\"" << ml << "\" y=\"" << h - 4
            << "\" font-size=\"9\" font-family=\"sans-serif\" fill=\"#777\">" << footnote
            << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Aligned-column text table for an EvalReport: actions as columns, frame-
// weighted average last.

inline std::string eval_report_table(const EvalReport& rep) {
    std::vector<std::string> names;
    std::vector<std::string> values;
    for (const auto& [action, err] : rep.per_action) {
        names.push_back(action);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", err);
        values.push_back(buf);
    }
    names.push_back("Avg.");
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", rep.average);
        values.push_back(buf);
    }
    std::ostringstream out;
    out << "Protocol #" << rep.protocol << " (" << rep.n_frames
        << " frames), MPJPE mm\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::size_t width = std::max(names[i].size(), values[i].size()) + 2;
        out << std::string(width - names[i].size(), ' ') << names[i];
    }
    out << "\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::size_t width = std::max(names[i].size(), values[i].size()) + 2;
        out << std::string(width - values[i].size(), ' ') << values[i];
    }
    out << "\n";
    return out.str();
}

}  // namespace eqlift
