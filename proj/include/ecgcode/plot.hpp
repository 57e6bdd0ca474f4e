#pragma once

// SVG rendering of a record with its P / QRS / T segments shaded.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ecgcode/error.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode::plot {

struct PlotOptions {
    std::vector<std::size_t> leads; ///< empty: all leads
    double width_px = 1600;
    double lead_height_px = 120;
    std::size_t max_points = 4000; ///< per lead polyline
};

inline const char* class_color(WaveClass c) {
    switch (c) {
    case WaveClass::P: return "#4c9be8";
    case WaveClass::QRS: return "#e8574c";
    case WaveClass::T: return "#54b86a";
    }
    return "#999999";
}

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

} // namespace detail

/// One `<rect class="segment ...">` per segment spanning every lead panel, then one polyline per lead.
inline std::string render_svg(const EcgRecord& record, const AnnotationSet& annotations, const PlotOptions& opt = {}) {
    std::vector<std::size_t> leads = opt.leads;
    if (leads.empty())
        for (std::size_t l = 0; l < record.n_leads(); ++l) leads.push_back(l);
    for (std::size_t l : leads)
        if (l >= record.n_leads()) throw ValidationError("plot: lead index " + std::to_string(l) + " out of range");
    annotations.validate(static_cast<std::int64_t>(record.n_samples()));

    const double margin = 40;
    const double w = opt.width_px;
    const double h = opt.lead_height_px * static_cast<double>(leads.size());
    const double n = static_cast<double>(record.n_samples());
    auto x_of = [&](double sample) { return margin + (w - 2 * margin) * sample / n; };
    using detail::num;

    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h + 2 * margin) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h + 2 * margin) + "\">\n";
    s += "<title>" + detail::escape(record.id()) + "</title>\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h + 2 * margin) + "\" fill=\"white\"/>\n";

    s += "<g id=\"segments\">\n";
    for (const auto& seg : annotations.segments) {
        const double x0 = x_of(static_cast<double>(seg.onset)), x1 = x_of(static_cast<double>(seg.offset));
        s += "<rect class=\"segment " + std::string(to_string(seg.wave_class)) + "\" x=\"" + num(x0) + "\" y=\"" +
             num(margin) + "\" width=\"" + num(x1 - x0) + "\" height=\"" + num(h) + "\" fill=\"" +
             class_color(seg.wave_class) + "\" fill-opacity=\"0.25\"/>\n";
    }
    s += "</g>\n";

    s += "<g id=\"leads\" fill=\"none\" stroke=\"black\" stroke-width=\"0.8\">\n";
    const std::size_t step = std::max<std::size_t>(1, (record.n_samples() + opt.max_points - 1) / opt.max_points);
    for (std::size_t k = 0; k < leads.size(); ++k) {
        const auto x = record.lead(leads[k]);
        float lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
        const double span = hi > lo ? hi - lo : 1.0;
        const double top = margin + opt.lead_height_px * static_cast<double>(k);
        auto y_of = [&](double v) { return top + opt.lead_height_px * (0.9 - 0.8 * (v - lo) / span); };
        s += "<text x=\"4\" y=\"" + num(top + opt.lead_height_px / 2) + "\" font-size=\"12\" stroke=\"none\" fill=\"black\">" +
             detail::escape(record.leads()[leads[k]]) + "</text>\n";
        s += "<polyline points=\"";
        for (std::size_t i = 0; i < x.size(); i += step) {
            if (i) s += ' ';
            s += num(x_of(static_cast<double>(i))) + "," + num(y_of(x[i]));
        }
        s += "\"/>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

} // namespace ecgcode::plot
