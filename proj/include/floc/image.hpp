#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "floc/common.hpp"
#include "floc/rng.hpp"

namespace floc {

// Interleaved H x W x C image with values in [0, 1].
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<real> data;

    Image() = default;
    Image(int h_, int w_, int c_, real fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    real& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    real at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
};

// H x W binary mask, 1 = tampered.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0)
        : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

inline real clamp01(real v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

namespace detail {

// Half-pixel-center source coordinates; factor 1 degenerates to the identity.
struct LinearTap {
    int i0, i1;
    real w0, w1;
};

inline std::vector<LinearTap> bilinear_taps(int src, int dst) {
    std::vector<LinearTap> taps(static_cast<size_t>(dst));
    const real scale = static_cast<real>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        real pos = (i + 0.5) * scale - 0.5;
        if (pos < 0) pos = 0;
        if (pos > src - 1) pos = static_cast<real>(src - 1);
        const int i0 = static_cast<int>(std::floor(pos));
        const int i1 = std::min(i0 + 1, src - 1);
        const real w1 = pos - i0;
        taps[static_cast<size_t>(i)] = {i0, i1, 1.0 - w1, w1};
    }
    return taps;
}

inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace detail

inline Image resize_bilinear(const Image& src, int oh, int ow) {
    FLOC_CHECK(src.h > 0 && src.w > 0, "resize_bilinear: empty image");
    FLOC_CHECK(oh > 0 && ow > 0, "resize_bilinear: bad target size ", oh, "x", ow);
    if (oh == src.h && ow == src.w) return src;
    const auto ty = detail::bilinear_taps(src.h, oh);
    const auto tx = detail::bilinear_taps(src.w, ow);
    Image out(oh, ow, src.c);
    for (int y = 0; y < oh; ++y) {
        const auto& ry = ty[static_cast<size_t>(y)];
        for (int x = 0; x < ow; ++x) {
            const auto& rx = tx[static_cast<size_t>(x)];
            for (int ch = 0; ch < src.c; ++ch) {
                const real top = ry.w0 * (rx.w0 * src.at(ry.i0, rx.i0, ch) + rx.w1 * src.at(ry.i0, rx.i1, ch));
                const real bot = ry.w1 * (rx.w0 * src.at(ry.i1, rx.i0, ch) + rx.w1 * src.at(ry.i1, rx.i1, ch));
                out.at(y, x, ch) = top + bot;
            }
        }
    }
    return out;
}

template <class T>
inline std::vector<T> resize_nearest_plane(const std::vector<T>& src, int sh, int sw, int oh, int ow) {
    std::vector<T> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        int sy = static_cast<int>((y + 0.5) * sh / oh);
        sy = std::min(sy, sh - 1);
        for (int x = 0; x < ow; ++x) {
            int sx = static_cast<int>((x + 0.5) * sw / ow);
            sx = std::min(sx, sw - 1);
            out[static_cast<size_t>(y) * ow + x] = src[static_cast<size_t>(sy) * sw + sx];
        }
    }
    return out;
}

inline Mask resize_nearest(const Mask& src, int oh, int ow) {
    Mask out;
    out.h = oh;
    out.w = ow;
    out.data = resize_nearest_plane(src.data, src.h, src.w, oh, ow);
    return out;
}

inline Image hflip(const Image& src) {
    Image out(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = src.at(y, src.w - 1 - x, ch);
    return out;
}

inline Mask hflip(const Mask& src) {
    Mask out(src.h, src.w);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) out.at(y, x) = src.at(y, src.w - 1 - x);
    return out;
}

// Odd-sized Gaussian kernel, sigma tied to the kernel size (OpenCV convention),
// reflect-101 borders.
inline Image gaussian_blur(const Image& src, int ksize) {
    FLOC_CHECK(ksize >= 1 && ksize % 2 == 1, "gaussian_blur: kernel size must be odd, got ", ksize);
    if (ksize == 1) return src;
    const int r = ksize / 2;
    const real sigma = 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8;
    std::vector<real> k(static_cast<size_t>(ksize));
    real sum = 0;
    for (int i = 0; i < ksize; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;

    Image tmp(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) {
                real acc = 0;
                for (int i = -r; i <= r; ++i)
                    acc += k[static_cast<size_t>(i + r)] * src.at(y, detail::reflect101(x + i, src.w), ch);
                tmp.at(y, x, ch) = acc;
            }
    Image out(src.h, src.w, src.c);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int ch = 0; ch < src.c; ++ch) {
                real acc = 0;
                for (int i = -r; i <= r; ++i)
                    acc += k[static_cast<size_t>(i + r)] * tmp.at(detail::reflect101(y + i, src.h), x, ch);
                out.at(y, x, ch) = acc;
            }
    return out;
}

// Additive Gaussian noise with the given standard deviation, clipped to [0,1].
inline Image add_gaussian_noise(const Image& src, real sigma, Rng& rng) {
    FLOC_CHECK(sigma >= 0, "add_gaussian_noise: sigma must be >= 0");
    Image out = src;
    for (auto& v : out.data) v = clamp01(v + sigma * rng.normal());
    return out;
}

} // namespace floc
