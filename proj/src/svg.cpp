#include "ricc/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace ricc {

namespace {

constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string num(double v) { return fmt("%.2f", v); }

std::string header(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& extra = "") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (extra.empty() ? "" : " " + extra) + ">" +
           xml_escape(s) + "</text>\n";
}

// Blue (lo) to yellow (hi).
std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = int(std::lround(68 + t * (253 - 68)));
    const int g = int(std::lround(1 + t * (231 - 1)));
    const int b = int(std::lround(84 + t * (37 - 84)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (lo == hi) lo -= 0.5, hi += 0.5;
    }
    double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

}  // namespace

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string svg_heatmap(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::vector<double>& values, double lo,
                        double hi) {
    if (values.size() != rows.size() * cols.size()) throw std::invalid_argument("svg_heatmap: shape mismatch");
    if (!(hi > lo)) throw std::invalid_argument("svg_heatmap: empty colour range");
    const double cell_w = 56, cell_h = 28, left = 120, top = 50;
    const double w = left + cell_w * double(cols.size()) + 20, h = top + cell_h * double(rows.size()) + 20;
    std::string out = header(w, h);
    out += text(left, 20, title, "font-size=\"14\"");
    for (std::size_t c = 0; c < cols.size(); ++c)
        out += text(left + cell_w * (double(c) + 0.5), top - 8, cols[c], "text-anchor=\"middle\"");
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double y = top + cell_h * double(r);
        out += text(left - 8, y + cell_h * 0.65, rows[r], "text-anchor=\"end\"");
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const double v = values[r * cols.size() + c];
            const double x = left + cell_w * double(c);
            const bool ok = std::isfinite(v);
            out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell_w) + "\" height=\"" +
                   num(cell_h) + "\" fill=\"" + (ok ? ramp((v - lo) / (hi - lo)) : std::string("#eeeeee")) +
                   "\" stroke=\"white\"/>\n";
            if (ok) {
                const char* ink = (v - lo) / (hi - lo) > 0.6 ? "black" : "white";
                out += text(x + cell_w / 2, y + cell_h * 0.65, num(v),
                            "text-anchor=\"middle\" fill=\"" + std::string(ink) + "\"");
            }
        }
    }
    return out + "</svg>\n";
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_x) {
    const double w = 640, h = 400, left = 60, right = 150, top = 40, bottom = 50;
    auto xv = [&](double x) { return log_x ? std::log10(x) : x; };
    Range rx, ry;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (log_x && !(x > 0)) throw std::invalid_argument("svg_line_plot: log axis needs positive x");
            rx.add(xv(x));
            ry.add(y);
        }
    rx.finish();
    ry.finish();
    const double x0 = left, x1 = w - right, y0 = h - bottom, y1 = top;

    std::string out = header(w, h);
    out += text(left, 22, title, "font-size=\"14\"");
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
           "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0, fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
        const double px = rx.map(fx, x0, x1), py = ry.map(fy, y0, y1);
        out += text(px, y0 + 16, log_x ? fmt("%.3g", std::pow(10.0, fx)) : fmt("%.3g", fx), "text-anchor=\"middle\"");
        out += text(x0 - 6, py + 4, fmt("%.3g", fy), "text-anchor=\"end\"");
    }
    out += text((x0 + x1) / 2, h - 10, x_label, "text-anchor=\"middle\"");
    out += text(14, (y0 + y1) / 2, y_label,
                "text-anchor=\"middle\" transform=\"rotate(-90 14 " + num((y0 + y1) / 2) + ")\"");

    for (std::size_t s = 0; s < series.size(); ++s) {
        const std::string colour = kPalette[s % kPalette.size()];
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!std::isfinite(y)) continue;
            pts += num(rx.map(xv(x), x0, x1)) + "," + num(ry.map(y, y0, y1)) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        for (const auto& [x, y] : series[s].points)
            if (std::isfinite(y))
                out += "<circle cx=\"" + num(rx.map(xv(x), x0, x1)) + "\" cy=\"" + num(ry.map(y, y0, y1)) +
                       "\" r=\"3\" fill=\"" + colour + "\"/>\n";
        const double ly = top + 18.0 * double(s);
        out += "<rect x=\"" + num(x1 + 15) + "\" y=\"" + num(ly) + "\" width=\"12\" height=\"12\" fill=\"" + colour +
               "\"/>\n";
        out += text(x1 + 32, ly + 10, series[s].name);
    }
    return out + "</svg>\n";
}

std::string svg_scatter(const std::string& title, const Embedding2D& points, const Labels& labels) {
    if (points.size() != labels.size()) throw std::invalid_argument("svg_scatter: one label per point");
    const double w = 560, h = 520, pad = 40, legend = 80;
    Range rx, ry;
    for (const auto& p : points) rx.add(p[0]), ry.add(p[1]);
    rx.finish();
    ry.finish();
    std::string out = header(w, h);
    out += text(pad, 22, title, "font-size=\"14\"");
    std::vector<int> seen;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto colour = kPalette[std::size_t(std::max(labels[i], 0)) % kPalette.size()];
        out += "<circle cx=\"" + num(rx.map(points[i][0], pad, w - pad - legend)) + "\" cy=\"" +
               num(ry.map(points[i][1], h - pad, pad)) + "\" r=\"2.5\" fill=\"" + colour + "\" fill-opacity=\"0.8\"/>\n";
        if (std::find(seen.begin(), seen.end(), labels[i]) == seen.end()) seen.push_back(labels[i]);
    }
    std::sort(seen.begin(), seen.end());
    for (std::size_t s = 0; s < seen.size(); ++s) {
        const double ly = pad + 18.0 * double(s);
        out += "<circle cx=\"" + num(w - legend + 10) + "\" cy=\"" + num(ly) + "\" r=\"5\" fill=\"" +
               kPalette[std::size_t(std::max(seen[s], 0)) % kPalette.size()] + "\"/>\n";
        out += text(w - legend + 22, ly + 4, std::to_string(seen[s]));
    }
    return out + "</svg>\n";
}

}  // namespace ricc
