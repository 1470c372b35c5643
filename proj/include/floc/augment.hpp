#pragma once

#include "floc/codec.hpp"
#include "floc/dataset.hpp"
#include "floc/image.hpp"
#include "floc/rng.hpp"

namespace floc {

// Each op fires independently with probability `prob`. Only the flip touches
// the mask; the photometric ops leave it untouched.
struct AugmentConfig {
    real prob = 0.5;
    int blur_kernels[3] = {3, 5, 7};
    int jpeg_quality_min = 60;
    int jpeg_quality_max = 100;
    real noise_sigma_max = 0.02; // sigma drawn from (0, max]
    real resize_factor_min = 0.5;
    real resize_factor_max = 1.0;
};

// Deterministic in (sample, seed): flip, blur, JPEG re-encode, noise, down-up
// resize, applied in that order.
inline ImageSample augment(const ImageSample& sample, uint64_t seed, const AugmentConfig& cfg = {}) {
    FLOC_CHECK(sample.image.h == sample.mask.h && sample.image.w == sample.mask.w,
               "augment: image/mask dimensions differ");
    Rng rng(hash_mix(seed, 0x9747b28c));
    ImageSample out = sample;

    if (rng.bernoulli(cfg.prob)) {
        out.image = hflip(out.image);
        out.mask = hflip(out.mask);
    }
    if (rng.bernoulli(cfg.prob)) {
        const int k = cfg.blur_kernels[rng.uniform_int(0, 2)];
        out.image = gaussian_blur(out.image, k);
    }
    if (rng.bernoulli(cfg.prob)) {
        const int q = rng.uniform_int(cfg.jpeg_quality_min, cfg.jpeg_quality_max);
        out.image = jpeg_roundtrip(out.image, q);
    }
    if (rng.bernoulli(cfg.prob)) {
        const real sigma = cfg.noise_sigma_max * (1.0 - rng.uniform()); // (0, max]
        out.image = add_gaussian_noise(out.image, sigma, rng);
    }
    if (rng.bernoulli(cfg.prob)) {
        const real f = rng.uniform(cfg.resize_factor_min, cfg.resize_factor_max);
        const int sh = std::max(1, static_cast<int>(std::lround(out.image.h * f)));
        const int sw = std::max(1, static_cast<int>(std::lround(out.image.w * f)));
        if (sh != out.image.h || sw != out.image.w) {
            Image small = resize_bilinear(out.image, sh, sw);
            out.image = resize_bilinear(small, sample.image.h, sample.image.w);
        }
    }
    return out;
}

} // namespace floc
