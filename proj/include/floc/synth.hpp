#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "floc/dataset.hpp"
#include "floc/image.hpp"
#include "floc/rng.hpp"

namespace floc {

// Texture family: a base color plus a few cosine waves per channel plus
// grain. Hosts and donors draw from overlapping but distinct frequency bands,
// the way spliced content carries texture statistics from a foreign capture.
struct TextureProfile {
    real freq_lo = 0.5, freq_hi = 6.0; // cycles per image side
    real amp_lo = 0.05, amp_hi = 0.18;
    real grain_lo = 0.0, grain_hi = 0.02;

    static TextureProfile host() { return {0.5, 6.0, 0.05, 0.18, 0.0, 0.012}; }
    static TextureProfile donor() { return {3.0, 12.0, 0.06, 0.20, 0.025, 0.05}; }
};

// Values land on the 8-bit grid so PNG round-trips are lossless.
inline Image synth_texture(int h, int w, Rng& rng, const TextureProfile& profile = {}) {
    struct Wave {
        real fx, fy, phase, amp;
    };
    Image img(h, w, 3);
    for (int ch = 0; ch < 3; ++ch) {
        const real base = rng.uniform(0.25, 0.75);
        const int n_waves = rng.uniform_int(2, 4);
        std::vector<Wave> waves(static_cast<size_t>(n_waves));
        for (auto& wv : waves) {
            wv.fx = rng.uniform(profile.freq_lo, profile.freq_hi) * 2.0 * 3.14159265358979323846 / w;
            wv.fy = rng.uniform(profile.freq_lo, profile.freq_hi) * 2.0 * 3.14159265358979323846 / h;
            wv.phase = rng.uniform(0.0, 6.28318530717958647692);
            wv.amp = rng.uniform(profile.amp_lo, profile.amp_hi);
        }
        const real grain = rng.uniform(profile.grain_lo, profile.grain_hi);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                real v = base;
                for (const auto& wv : waves) v += wv.amp * std::cos(wv.fx * x + wv.fy * y + wv.phase);
                v += grain * rng.normal();
                img.at(y, x, ch) = quantize_u8(v) / 255.0;
            }
    }
    return img;
}

namespace detail {

struct Region {
    // Boolean stencil within a bounding box.
    int h = 0, w = 0;
    std::vector<uint8_t> on;
    size_t area = 0;
};

inline Region make_ellipse(int bh, int bw) {
    Region r;
    r.h = bh;
    r.w = bw;
    r.on.assign(static_cast<size_t>(bh) * bw, 0);
    const real cy = (bh - 1) * 0.5, cx = (bw - 1) * 0.5;
    const real ry = bh * 0.5, rx = bw * 0.5;
    for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
            const real dy = (y - cy) / ry, dx = (x - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) {
                r.on[static_cast<size_t>(y) * bw + x] = 1;
                ++r.area;
            }
        }
    return r;
}

inline Region make_polygon(int bh, int bw, Rng& rng) {
    // Star-convex polygon around the box center; rasterized by angle test.
    const int n = rng.uniform_int(5, 9);
    std::vector<real> radii(static_cast<size_t>(n));
    for (auto& rad : radii) rad = rng.uniform(0.45, 1.0);
    Region r;
    r.h = bh;
    r.w = bw;
    r.on.assign(static_cast<size_t>(bh) * bw, 0);
    const real cy = (bh - 1) * 0.5, cx = (bw - 1) * 0.5;
    const real ry = bh * 0.5, rx = bw * 0.5;
    const real two_pi = 6.28318530717958647692;
    for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
            const real dy = (y - cy) / ry, dx = (x - cx) / rx;
            const real rho = std::sqrt(dy * dy + dx * dx);
            if (rho > 1.0) continue;
            real theta = std::atan2(dy, dx);
            if (theta < 0) theta += two_pi;
            const real seg = theta / two_pi * n;
            const int i0 = static_cast<int>(seg) % n;
            const int i1 = (i0 + 1) % n;
            const real t = seg - std::floor(seg);
            const real edge = radii[static_cast<size_t>(i0)] * (1 - t) + radii[static_cast<size_t>(i1)] * t;
            if (rho <= edge) {
                r.on[static_cast<size_t>(y) * bw + x] = 1;
                ++r.area;
            }
        }
    return r;
}

} // namespace detail

// Paste a random elliptical or polygonal region of `donor` into `host`.
// The pasted region covers 5%-40% of the host area; the mask is exactly the
// set of changed pixels (pasted values that coincide with the host are nudged
// by one 8-bit step). Deterministic in `seed`.
inline ImageSample synth_splice(const Image& host, const Image& donor, uint64_t seed,
                                bool allow_identity_placement = false) {
    FLOC_CHECK(host.h >= 128 && host.w >= 128, "synth_splice: host must be at least 128x128");
    FLOC_CHECK(donor.h >= 128 && donor.w >= 128, "synth_splice: donor must be at least 128x128");
    FLOC_CHECK(host.c == 3 && donor.c == 3, "synth_splice: RGB images required");
    Rng rng(hash_mix(seed, 0x5bd1e995));

    const size_t total = static_cast<size_t>(host.h) * host.w;
    const bool same_source = host.h == donor.h && host.w == donor.w && host.data == donor.data;

    for (int attempt = 0; attempt < 100; ++attempt) {
        // Bounding box sized for the target area fraction, then checked after
        // rasterization (the stencil fills only part of the box).
        const real frac_target = rng.uniform(0.08, 0.38);
        const real box_frac = frac_target / 0.6;
        const real aspect = rng.uniform(0.6, 1.6);
        int bh = static_cast<int>(std::sqrt(box_frac * total * aspect));
        int bw = static_cast<int>(std::sqrt(box_frac * total / aspect));
        bh = std::max(8, std::min(bh, std::min(host.h, donor.h) - 2));
        bw = std::max(8, std::min(bw, std::min(host.w, donor.w) - 2));

        const bool use_ellipse = rng.bernoulli(0.5);
        detail::Region region = use_ellipse ? detail::make_ellipse(bh, bw) : detail::make_polygon(bh, bw, rng);

        const real frac = static_cast<real>(region.area) / total;
        const int sy = rng.uniform_int(0, donor.h - bh);
        const int sx = rng.uniform_int(0, donor.w - bw);
        const int dy = rng.uniform_int(0, host.h - bh);
        const int dx = rng.uniform_int(0, host.w - bw);
        if (frac < 0.05 || frac > 0.40) continue;
        if (same_source && !allow_identity_placement && sy == dy && sx == dx) continue;

        ImageSample out;
        out.image = host;
        out.mask = Mask(host.h, host.w, 0);
        for (int y = 0; y < bh; ++y)
            for (int x = 0; x < bw; ++x) {
                if (!region.on[static_cast<size_t>(y) * bw + x]) continue;
                bool changed = false;
                for (int ch = 0; ch < 3; ++ch) {
                    const real v = donor.at(sy + y, sx + x, ch);
                    if (v != out.image.at(dy + y, dx + x, ch)) changed = true;
                    out.image.at(dy + y, dx + x, ch) = v;
                }
                if (!changed) {
                    // Keep the mask exact: force a one-step difference.
                    uint8_t q = quantize_u8(out.image.at(dy + y, dx + x, 0));
                    q = q == 255 ? 254 : static_cast<uint8_t>(q + 1);
                    out.image.at(dy + y, dx + x, 0) = q / 255.0;
                }
                out.mask.at(dy + y, dx + x) = 1;
            }
        return out;
    }
    fail("synth_splice: no region with area fraction in [0.05, 0.40] after 100 attempts");
}

// Convenience driver: host and donor textures from disjoint seed streams and
// from the two texture profiles. Donors additionally carry a mild
// foreign-camera white-balance shift (cool cast), the way spliced content
// betrays a different capture pipeline.
inline ImageSample make_synthetic_sample(int size, uint64_t seed) {
    Rng host_rng(hash_seq({seed, 1}));
    Rng donor_rng(hash_seq({seed, 2}));
    const Image host = synth_texture(size, size, host_rng, TextureProfile::host());
    Image donor = synth_texture(size, size, donor_rng, TextureProfile::donor());
    const real r_gain = donor_rng.uniform(0.72, 0.82);
    const real b_gain = donor_rng.uniform(1.14, 1.26);
    for (int y = 0; y < donor.h; ++y)
        for (int x = 0; x < donor.w; ++x) {
            donor.at(y, x, 0) = quantize_u8(donor.at(y, x, 0) * r_gain) / 255.0;
            donor.at(y, x, 2) = quantize_u8(donor.at(y, x, 2) * b_gain) / 255.0;
        }
    ImageSample s = synth_splice(host, donor, hash_seq({seed, 3}));
    s.dataset_id = "synthetic";
    s.sample_id = "synth_" + std::to_string(seed);
    return s;
}

} // namespace floc
