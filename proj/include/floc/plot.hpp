#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "floc/codec.hpp"
#include "floc/evaluator.hpp"

namespace floc {

namespace detail {

// 3x5 glyphs for the tick labels; enough for numbers.
inline const uint16_t* glyph_rows(char c) {
    static const uint16_t digits[13][5] = {
        {0b111, 0b101, 0b101, 0b101, 0b111}, // 0
        {0b010, 0b110, 0b010, 0b010, 0b111}, // 1
        {0b111, 0b001, 0b111, 0b100, 0b111}, // 2
        {0b111, 0b001, 0b111, 0b001, 0b111}, // 3
        {0b101, 0b101, 0b111, 0b001, 0b001}, // 4
        {0b111, 0b100, 0b111, 0b001, 0b111}, // 5
        {0b111, 0b100, 0b111, 0b101, 0b111}, // 6
        {0b111, 0b001, 0b010, 0b010, 0b010}, // 7
        {0b111, 0b101, 0b111, 0b101, 0b111}, // 8
        {0b111, 0b101, 0b111, 0b001, 0b111}, // 9
        {0b000, 0b000, 0b000, 0b010, 0b000}, // .
        {0b000, 0b000, 0b111, 0b000, 0b000}, // -
        {0b000, 0b000, 0b000, 0b000, 0b000}, // space
    };
    if (c >= '0' && c <= '9') return digits[c - '0'];
    if (c == '.') return digits[10];
    if (c == '-') return digits[11];
    return digits[12];
}

inline void put_pixel(U8Image& img, int y, int x, uint8_t r, uint8_t g, uint8_t b) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
}

inline void draw_line(U8Image& img, real y0, real x0, real y1, real x1, uint8_t r, uint8_t g, uint8_t b) {
    const real dy = y1 - y0, dx = x1 - x0;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::fabs(dy), std::fabs(dx)))));
    for (int i = 0; i <= steps; ++i) {
        const real t = static_cast<real>(i) / steps;
        put_pixel(img, static_cast<int>(std::lround(y0 + t * dy)), static_cast<int>(std::lround(x0 + t * dx)), r, g,
                  b);
    }
}

inline void draw_text(U8Image& img, int y, int x, const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i) {
        const uint16_t* rows = glyph_rows(text[i]);
        for (int ry = 0; ry < 5; ++ry)
            for (int rx = 0; rx < 3; ++rx)
                if (rows[ry] & (1 << (2 - rx))) put_pixel(img, y + ry, x + static_cast<int>(i) * 4 + rx, 30, 30, 30);
    }
}

inline std::string short_num(real v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

} // namespace detail

// Robustness curve: degradation parameter on x, mean F1 on y. The baseline
// row is drawn as a dashed horizontal reference line; labelled rows without a
// numeric axis (chains) are spaced uniformly.
inline void save_curve_plot(const std::string& path, const std::vector<CurveRow>& curve,
                            const std::string& x_label = "") {
    FLOC_CHECK(!curve.empty(), "save_curve_plot: empty curve");
    const int W = 480, H = 320, ml = 48, mr = 16, mt = 16, mb = 40;
    U8Image img(H, W, 3, 255);

    std::vector<CurveRow> pts;
    real baseline = -1;
    for (const auto& r : curve) {
        if (r.label == "baseline")
            baseline = r.mean_f1;
        else
            pts.push_back(r);
    }
    if (pts.empty()) pts = curve;

    real xmin = pts.front().param, xmax = pts.front().param;
    for (const auto& r : pts) {
        xmin = std::min(xmin, r.param);
        xmax = std::max(xmax, r.param);
    }
    if (xmax == xmin) xmax = xmin + 1;

    const auto x_of = [&](real v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto y_of = [&](real f1) { return H - mb - f1 * (H - mt - mb); };

    // Axes box and y gridlines at 0, 0.25, ..., 1.
    detail::draw_line(img, H - mb, ml, H - mb, W - mr, 0, 0, 0);
    detail::draw_line(img, mt, ml, H - mb, ml, 0, 0, 0);
    for (int i = 0; i <= 4; ++i) {
        const real tick = i * 0.25;
        const int y = static_cast<int>(y_of(tick));
        for (int x = ml; x < W - mr; x += 6) detail::put_pixel(img, y, x, 220, 220, 220);
        detail::draw_text(img, y - 2, 8, detail::short_num(tick));
    }
    for (const auto& r : pts) {
        const int x = static_cast<int>(x_of(r.param));
        detail::draw_line(img, H - mb, x, H - mb + 4, x, 0, 0, 0);
        detail::draw_text(img, H - mb + 8, x - 8, detail::short_num(r.param));
    }
    if (!x_label.empty()) detail::draw_text(img, H - 12, ml, x_label);

    if (baseline >= 0) {
        const int y = static_cast<int>(y_of(baseline));
        for (int x = ml; x < W - mr; x += 8) {
            detail::put_pixel(img, y, x, 120, 120, 230);
            detail::put_pixel(img, y, x + 1, 120, 120, 230);
            detail::put_pixel(img, y, x + 2, 120, 120, 230);
        }
    }
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        detail::draw_line(img, y_of(pts[i].mean_f1), x_of(pts[i].param), y_of(pts[i + 1].mean_f1),
                          x_of(pts[i + 1].param), 200, 60, 60);
    for (const auto& r : pts) {
        const int y = static_cast<int>(y_of(r.mean_f1));
        const int x = static_cast<int>(x_of(r.param));
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
                if (dy * dy + dx * dx <= 4) detail::put_pixel(img, y + dy, x + dx, 160, 30, 30);
    }
    save_png(path, img);
}

} // namespace floc
