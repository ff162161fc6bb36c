#pragma once

// Self-contained SVG plots for reports: heatmap tables, line plots and
// labelled scatter plots. Output depends only on the inputs.

#include <string>
#include <utility>
#include <vector>

#include "ricc/cluster.hpp"
#include "ricc/metrics.hpp"

namespace ricc {

// values is rows x cols, row-major; cells are coloured on [lo, hi] and
// annotated with two decimals. Non-finite cells are left blank.
std::string svg_heatmap(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::vector<double>& values, double lo = 0.0,
                        double hi = 1.0);

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_x = false);

std::string svg_scatter(const std::string& title, const Embedding2D& points, const Labels& labels);

// Escapes &, <, > and quotes for text and attribute content.
std::string xml_escape(const std::string& s);

}  // namespace ricc
