// Deterministic SVG rendering: training curves on a log-scaled step axis,
// spectrum bar charts and grayscale heatmaps.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grok/fourier.hpp"
#include "grok/io.hpp"
#include "grok/optimizer.hpp"

namespace grok {

class EmptySeries : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace svg {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 48.0;

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string open(const std::string& title, double w = kWidth, double h = kHeight) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + num(w / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) +
           "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, const char* stroke = "black") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + stroke + "\" stroke-width=\"1\"/>\n";
}

inline double plot_w() { return kWidth - kLeft - kRight; }
inline double plot_h() { return kHeight - kTop - kBottom; }

inline std::string frame(const std::string& xlabel, const std::string& ylabel) {
    std::string s;
    s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(plot_w()) + "\" height=\"" +
         num(plot_h()) + "\" fill=\"none\" stroke=\"black\"/>\n";
    s += text(kLeft + plot_w() / 2, kHeight - 10, xlabel);
    s += "<text x=\"16\" y=\"" + num(kTop + plot_h() / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + plot_h() / 2) + ")\">" + escape(ylabel) + "</text>\n";
    return s;
}

struct Series {
    std::string label;
    const char* color;
    std::vector<std::pair<double, double>> points;  // (step, value)
};

// Curves over a log10 step axis; step 0 is drawn at step 1.
inline std::string log_x_curves(const std::string& title, const std::string& ylabel, const std::vector<Series>& series,
                                double y_min, double y_max) {
    double x_max = 1.0;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) x_max = std::max(x_max, x);
    const double decades = std::max(1.0, std::ceil(std::log10(x_max)));
    auto px = [&](double step) { return kLeft + plot_w() * std::log10(std::max(step, 1.0)) / decades; };
    auto py = [&](double v) {
        const double t = (std::clamp(v, y_min, y_max) - y_min) / (y_max - y_min);
        return kTop + plot_h() * (1.0 - t);
    };
    std::string out = open(title) + frame("step (log scale)", ylabel);
    for (int d = 0; d <= static_cast<int>(decades); ++d) {
        const double x = kLeft + plot_w() * d / decades;
        out += line(x, kTop + plot_h(), x, kTop + plot_h() + 4);
        out += text(x, kTop + plot_h() + 16, "1e" + std::to_string(d));
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = y_min + (y_max - y_min) * i / 4.0;
        out += line(kLeft - 4, py(v), kLeft, py(v));
        out += text(kLeft - 6, py(v) + 4, num(v), "end");
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        out += "<polyline fill=\"none\" stroke=\"" + std::string(s.color) + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < s.points.size(); ++j) {
            if (j) out += ' ';
            out += num(px(s.points[j].first)) + "," + num(py(s.points[j].second));
        }
        out += "\"/>\n";
        const double ly = kTop + 14 + 14.0 * static_cast<double>(i);
        out += line(kLeft + 10, ly - 4, kLeft + 30, ly - 4, s.color);
        out += text(kLeft + 34, ly, s.label, "start");
    }
    return out + "</svg>\n";
}

}  // namespace svg

inline std::string render_accuracy_svg(const ProgressTrace& trace, const std::string& title) {
    if (trace.empty()) throw EmptySeries("accuracy plot needs at least one evaluation");
    svg::Series train{"train", "#1f77b4", {}}, test{"test", "#d62728", {}};
    for (const auto& pt : trace) {
        train.points.emplace_back(static_cast<double>(pt.step), pt.train_acc);
        test.points.emplace_back(static_cast<double>(pt.step), pt.test_acc);
    }
    return svg::log_x_curves(title, "accuracy", {train, test}, 0.0, 1.0);
}

inline std::string render_measures_svg(const ProgressTrace& trace, const std::string& title) {
    if (trace.empty()) throw EmptySeries("measure plot needs at least one evaluation");
    svg::Series fe{"FFD embed", "#1f77b4", {}}, ce{"FCR embed", "#ff7f0e", {}}, fw{"FFD W_L", "#2ca02c", {}},
        cw{"FCR W_L", "#9467bd", {}};
    for (const auto& pt : trace) {
        const auto s = static_cast<double>(pt.step);
        fe.points.emplace_back(s, pt.ffd_embed);
        ce.points.emplace_back(s, pt.fcr_embed);
        fw.points.emplace_back(s, pt.ffd_wl);
        cw.points.emplace_back(s, pt.fcr_wl);
    }
    return svg::log_x_curves(title, "measure", {fe, ce, fw, cw}, 0.0, 1.0);
}

// Paired cos / sin bars per frequency.
inline std::string render_spectrum_svg(const FourierSpectrum& s, const std::string& title) {
    using namespace svg;
    const int K = s.n_freq();
    if (K == 0) throw EmptySeries("spectrum plot needs at least one frequency");
    double mx = 0.0;
    for (int k = 0; k < K; ++k) mx = std::max({mx, s.cos_norm[k], s.sin_norm[k]});
    if (mx <= 0.0) mx = 1.0;
    const double slot = plot_w() / K;
    const double bar = slot * 0.4;
    std::string out = open(title) + frame("frequency k", "projection norm");
    for (int k = 0; k < K; ++k) {
        const double x0 = kLeft + slot * k + slot * 0.1;
        const double hc = plot_h() * s.cos_norm[k] / mx;
        const double hs = plot_h() * s.sin_norm[k] / mx;
        out += "<rect x=\"" + num(x0) + "\" y=\"" + num(kTop + plot_h() - hc) + "\" width=\"" + num(bar) +
               "\" height=\"" + num(hc) + "\" fill=\"#1f77b4\"/>\n";
        out += "<rect x=\"" + num(x0 + bar) + "\" y=\"" + num(kTop + plot_h() - hs) + "\" width=\"" + num(bar) +
               "\" height=\"" + num(hs) + "\" fill=\"#ff7f0e\"/>\n";
        if (K <= 20 || (k + 1) % 8 == 0 || k == 0)
            out += text(kLeft + slot * (k + 0.5), kTop + plot_h() + 14, std::to_string(k + 1));
    }
    out += text(kLeft - 6, kTop + 4, num(mx), "end");
    out += text(kLeft - 6, kTop + plot_h() + 4, "0", "end");
    out += "<rect x=\"" + num(kWidth - 110) + "\" y=\"" + num(kTop + 6) + "\" width=\"10\" height=\"10\" fill=\"#1f77b4\"/>\n";
    out += text(kWidth - 96, kTop + 15, "cos", "start");
    out += "<rect x=\"" + num(kWidth - 70) + "\" y=\"" + num(kTop + 6) + "\" width=\"10\" height=\"10\" fill=\"#ff7f0e\"/>\n";
    out += text(kWidth - 56, kTop + 15, "sin", "start");
    return out + "</svg>\n";
}

// Darker cells are larger values; scaled to the grid maximum.
inline std::string render_heatmap_svg(const Matrix& grid, const std::string& title) {
    using namespace svg;
    if (grid.size() == 0) throw EmptySeries("heatmap needs a non-empty grid");
    const double mx = grid.maxCoeff();
    const double mn = grid.minCoeff();
    const double span = mx > mn ? mx - mn : 1.0;
    const double side = std::min(plot_w(), plot_h());
    const double cw = side / static_cast<double>(grid.cols());
    const double ch = side / static_cast<double>(grid.rows());
    std::string out = open(title);
    for (Eigen::Index r = 0; r < grid.rows(); ++r)
        for (Eigen::Index c = 0; c < grid.cols(); ++c) {
            const int g = 255 - static_cast<int>(std::lround(255.0 * (grid(r, c) - mn) / span));
            char color[8];
            std::snprintf(color, sizeof color, "#%02x%02x%02x", g, g, g);
            out += "<rect x=\"" + num(kLeft + cw * static_cast<double>(c)) + "\" y=\"" +
                   num(kTop + ch * static_cast<double>(r)) + "\" width=\"" + num(cw) + "\" height=\"" + num(ch) +
                   "\" fill=\"" + color + "\"/>\n";
        }
    out += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(side) + "\" height=\"" + num(side) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    out += text(kLeft + side / 2, kTop + side + 16, "basis index along b");
    out += "<text x=\"16\" y=\"" + num(kTop + side / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           num(kTop + side / 2) + ")\">basis index along a</text>\n";
    return out + "</svg>\n";
}

// Renders first so that a failed render leaves no file behind.
template <class Data>
void write_plot(const std::filesystem::path& path, std::string (*render)(const Data&, const std::string&),
                const Data& data, const std::string& title) {
    const std::string svg = render(data, title);
    write_file_atomic(path, svg);
}

}  // namespace grok
