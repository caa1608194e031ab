// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace autoduct::svg {

/// Axis range padded by 5% on each side; a degenerate range is widened to +/-1.
struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;

    static AxisRange covering(std::span<const double> values)
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (!std::isfinite(lo))
            return {0.0, 1.0};
        if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo)))
            return {lo - 1.0, hi + 1.0};
        const double pad = 0.05 * (hi - lo);
        return {lo - pad, hi + pad};
    }
};

/// Fixed-size line/scatter chart with a plot box, four ticks per axis and
/// labels. Coordinates are written with three decimals so output is stable.
class Chart {
public:
    static constexpr double width = 640.0;
    static constexpr double height = 480.0;
    static constexpr double left = 80.0;
    static constexpr double right = 20.0;
    static constexpr double top = 40.0;
    static constexpr double bottom = 60.0;

    Chart(std::string title, std::string x_label, std::string y_label, AxisRange x, AxisRange y)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)), x_(x), y_(y)
    {
    }

    [[nodiscard]] double px(double x) const { return left + (x - x_.lo) / (x_.hi - x_.lo) * (width - left - right); }
    [[nodiscard]] double py(double y) const
    {
        return height - bottom - (y - y_.lo) / (y_.hi - y_.lo) * (height - top - bottom);
    }

    void markers(std::span<const double> xs, std::span<const double> ys, const std::string& color, double radius = 2.5)
    {
        for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
            body_ << "<circle class=\"marker\" cx=\"" << f(px(xs[i])) << "\" cy=\"" << f(py(ys[i])) << "\" r=\""
                  << f(radius) << "\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
    }

    void line(std::span<const double> xs, std::span<const double> ys, const std::string& color,
              const std::string& css_class = "series", bool dashed = false)
    {
        body_ << "<polyline class=\"" << css_class << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
        if (dashed)
            body_ << " stroke-dasharray=\"6 4\"";
        body_ << " points=\"";
        for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
            body_ << (i ? " " : "") << f(px(xs[i])) << ',' << f(py(ys[i]));
        body_ << "\"/>\n";
    }

    /// Shaded region between lo and hi curves over xs.
    void band(std::span<const double> xs, std::span<const double> lo, std::span<const double> hi, const std::string& color)
    {
        body_ << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i)
            body_ << (i ? " " : "") << f(px(xs[i])) << ',' << f(py(hi[i]));
        for (std::size_t i = xs.size(); i-- > 0;)
            body_ << ' ' << f(px(xs[i])) << ',' << f(py(lo[i]));
        body_ << "\"/>\n";
    }

    void bars(std::span<const double> edges, std::span<const double> counts, const std::string& color)
    {
        for (std::size_t i = 0; i + 1 < edges.size() && i < counts.size(); ++i) {
            const double x0 = px(edges[i]), x1 = px(edges[i + 1]);
            const double y0 = py(0.0), y1 = py(counts[i]);
            body_ << "<rect class=\"bar\" x=\"" << f(x0) << "\" y=\"" << f(y1) << "\" width=\"" << f(x1 - x0)
                  << "\" height=\"" << f(y0 - y1) << "\" fill=\"" << color << "\" stroke=\"white\"/>\n";
        }
    }

    void legend(const std::string& label, const std::string& color)
    {
        const double y = top + 16.0 * static_cast<double>(legend_count_++) + 12.0;
        body_ << "<rect x=\"" << f(left + 12.0) << "\" y=\"" << f(y - 8.0) << "\" width=\"10\" height=\"10\" fill=\""
              << color << "\"/>\n<text x=\"" << f(left + 28.0) << "\" y=\"" << f(y) << "\" font-size=\"11\">"
              << escape(label) << "</text>\n";
    }

    [[nodiscard]] std::string str() const
    {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
            << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << "<text x=\"" << f(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_)
            << "</text>\n";
        const double x0 = left, x1 = width - right, y0 = height - bottom, y1 = top;
        out << "<rect class=\"frame\" x=\"" << f(x0) << "\" y=\"" << f(y1) << "\" width=\"" << f(x1 - x0)
            << "\" height=\"" << f(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double xv = x_.lo + (x_.hi - x_.lo) * i / 4.0;
            const double yv = y_.lo + (y_.hi - y_.lo) * i / 4.0;
            out << "<text x=\"" << f(px(xv)) << "\" y=\"" << f(y0 + 16) << "\" text-anchor=\"middle\" font-size=\"10\">"
                << tick(xv) << "</text>\n";
            out << "<text x=\"" << f(x0 - 6) << "\" y=\"" << f(py(yv) + 3) << "\" text-anchor=\"end\" font-size=\"10\">"
                << tick(yv) << "</text>\n";
        }
        out << "<text x=\"" << f((x0 + x1) / 2) << "\" y=\"" << f(height - 16) << "\" text-anchor=\"middle\" font-size=\"12\">"
            << escape(x_label_) << "</text>\n"
            << "<text x=\"16\" y=\"" << f((y0 + y1) / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
            << f((y0 + y1) / 2) << ")\">" << escape(y_label_) << "</text>\n";
        out << "<g clip-path=\"url(#plot)\">\n<clipPath id=\"plot\"><rect x=\"" << f(x0) << "\" y=\"" << f(y1)
            << "\" width=\"" << f(x1 - x0) << "\" height=\"" << f(y0 - y1) << "\"/></clipPath>\n"
            << body_.str() << "</g>\n</svg>\n";
        return out.str();
    }

    static std::string escape(const std::string& s)
    {
        std::string out;
        for (char c : s) {
            switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
            }
        }
        return out;
    }

private:
    static std::string f(double v) { return format_fixed(v, 3); }

    static std::string tick(double v)
    {
        char buffer[32];
        std::snprintf(buffer, sizeof buffer, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
        return buffer;
    }

    std::string title_, x_label_, y_label_;
    AxisRange x_, y_;
    std::ostringstream body_;
    int legend_count_ = 0;
};

} // namespace autoduct::svg
