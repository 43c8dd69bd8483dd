#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <cbdemand/errors.hpp>
#include <cbdemand/evaluation.hpp>

namespace cbdemand {

// Small fixed-layout SVG plots for the batch reports. Coordinates are
// formatted with two decimals so reruns stay byte-identical.
namespace svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Canvas {
    double width = 640, height = 440;
    std::string body;

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              const std::string& extra = "") {
        body += "<line x1='" + num(x1) + "' y1='" + num(y1) + "' x2='" + num(x2) + "' y2='" +
                num(y2) + "' stroke='" + stroke + "' " + extra + "/>\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill) {
        body += "<rect x='" + num(x) + "' y='" + num(y) + "' width='" + num(w) + "' height='" +
                num(h) + "' fill='" + fill + "'/>\n";
    }
    void circle(double x, double y, double r, const std::string& fill) {
        body += "<circle cx='" + num(x) + "' cy='" + num(y) + "' r='" + num(r) + "' fill='" +
                fill + "'/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 12,
              const std::string& anchor = "start") {
        body += "<text x='" + num(x) + "' y='" + num(y) + "' font-size='" +
                std::to_string(size) + "' font-family='sans-serif' text-anchor='" + anchor +
                "'>" + s + "</text>\n";
    }
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write '" + path + "'");
        out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << num(width) << "' height='"
            << num(height) << "' viewBox='0 0 " << num(width) << " " << num(height) << "'>\n"
            << "<rect width='100%' height='100%' fill='white'/>\n"
            << body << "</svg>\n";
    }
};

/// PIT histogram bars with the uniform expectation as a dashed line.
inline void render_pit_histogram(const PitHistogram& hist, const std::string& title,
                                 const std::string& path) {
    Canvas c;
    const double left = 50, right = 20, top = 40, bottom = 40;
    const double pw = c.width - left - right, ph = c.height - top - bottom;
    double max_count = 1.0;
    for (auto n : hist.counts) max_count = std::max(max_count, static_cast<double>(n));
    const double uniform = static_cast<double>(hist.total) / hist.n_bins;
    max_count = std::max(max_count, uniform) * 1.15;

    for (int k = 0; k < hist.n_bins; ++k) {
        const double h = ph * static_cast<double>(hist.counts[k]) / max_count;
        c.rect(left + pw * k / hist.n_bins, top + ph - h, pw / hist.n_bins, h, "#4878a8");
    }
    const double uy = top + ph - ph * uniform / max_count;
    c.line(left, uy, left + pw, uy, "#333333", "stroke-dasharray='6,4'");
    c.line(left, top + ph, left + pw, top + ph, "black");
    c.line(left, top, left, top + ph, "black");
    c.text(left, 25, title, 14);
    c.text(left, c.height - 12, "0", 11);
    c.text(left + pw, c.height - 12, "1", 11, "end");
    c.text(left - 8, top + ph, "0", 11, "end");
    c.save(path);
}

/// Inverse quantile profile: one column per group, one marker per quantile,
/// dashed lines at the expected fractions.
inline void render_quantile_profile(const QuantileProfile& profile, const std::string& title,
                                    const std::string& path) {
    Canvas c;
    const double left = 55, right = 20, top = 40, bottom = 50;
    const double pw = c.width - left - right, ph = c.height - top - bottom;
    const std::size_t n_groups = profile.groups.size();
    const std::vector<std::string> colors = {"#4878a8", "#b4582c", "#508f4e",
                                             "#9350a1", "#c8a227", "#5ba3a3"};
    for (double q : profile.quantiles) {
        const double y = top + ph * (1.0 - q);
        c.line(left, y, left + pw, y, "#999999", "stroke-dasharray='5,5'");
        c.text(left + pw + 2, y + 4, num(q), 10);
    }
    for (std::size_t g = 0; g < n_groups; ++g) {
        const double x = left + pw * (static_cast<double>(g) + 0.5) /
                                    static_cast<double>(n_groups);
        for (std::size_t k = 0; k < profile.quantiles.size(); ++k) {
            const double y = top + ph * (1.0 - profile.fraction[g][k]);
            c.circle(x, y, 3.5, colors[k % colors.size()]);
        }
        c.text(x, c.height - 26, profile.groups[g], 10, "middle");
    }
    c.line(left, top + ph, left + pw, top + ph, "black");
    c.line(left, top, left, top + ph, "black");
    c.text(left, 25, title, 14);
    c.text(left - 8, top + 10, "1", 11, "end");
    c.text(left - 8, top + ph, "0", 11, "end");
    c.save(path);
}

/// Profile histogram: bin means with +-1 standard deviation whiskers.
inline void render_profile_histogram(const std::vector<ProfileBin>& bins,
                                     const std::string& title, const std::string& path) {
    Canvas c;
    const double left = 55, right = 20, top = 40, bottom = 50;
    const double pw = c.width - left - right, ph = c.height - top - bottom;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& b : bins) {
        if (b.count == 0) continue;
        lo = std::min(lo, b.mean - b.stddev);
        hi = std::max(hi, b.mean + b.stddev);
    }
    if (!(hi > lo)) {
        lo = 0;
        hi = 1;
    }
    const double span = hi - lo;
    const double x0 = bins.front().lo, x1 = bins.back().hi;
    auto sx = [&](double x) { return left + pw * (x - x0) / (x1 - x0); };
    auto sy = [&](double y) { return top + ph * (1.0 - (y - lo) / span); };
    for (const auto& b : bins) {
        if (b.count == 0) continue;
        const double cx = sx(0.5 * (b.lo + b.hi));
        c.line(cx, sy(b.mean - b.stddev), cx, sy(b.mean + b.stddev), "#777777");
        c.circle(cx, sy(b.mean), 3.5, "#b4582c");
    }
    c.line(left, top + ph, left + pw, top + ph, "black");
    c.line(left, top, left, top + ph, "black");
    c.text(left, 25, title, 14);
    c.text(left, c.height - 26, num(x0), 10);
    c.text(left + pw, c.height - 26, num(x1), 10, "end");
    c.text(left - 8, top + 10, num(hi), 10, "end");
    c.text(left - 8, top + ph, num(lo), 10, "end");
    c.save(path);
}

}  // namespace svg
}  // namespace cbdemand
