#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "floc/codec.hpp"
#include "floc/image.hpp"
#include "floc/rng.hpp"

namespace floc {

// Post-processing op for robustness evaluation. `noise` intensity is the
// variance of the additive Gaussian noise.
struct DegradationOp {
    enum class Kind { jpeg, blur, noise, resize };
    Kind kind;
    int quality = 0;       // jpeg, [1,100]
    int kernel = 0;        // blur, odd
    real intensity = 0.0;  // noise, variance
    real factor = 0.0;     // resize, > 0

    static DegradationOp jpeg(int quality) {
        FLOC_CHECK(quality >= 1 && quality <= 100, "degrade: jpeg quality must be in [1,100], got ", quality);
        DegradationOp op;
        op.kind = Kind::jpeg;
        op.quality = quality;
        return op;
    }
    static DegradationOp blur(int kernel) {
        FLOC_CHECK(kernel >= 1 && kernel % 2 == 1, "degrade: blur kernel must be odd, got ", kernel);
        DegradationOp op;
        op.kind = Kind::blur;
        op.kernel = kernel;
        return op;
    }
    static DegradationOp noise(real intensity) {
        FLOC_CHECK(intensity >= 0, "degrade: noise intensity must be >= 0, got ", intensity);
        DegradationOp op;
        op.kind = Kind::noise;
        op.intensity = intensity;
        return op;
    }
    static DegradationOp resize(real factor) {
        FLOC_CHECK(factor > 0, "degrade: resize factor must be > 0, got ", factor);
        DegradationOp op;
        op.kind = Kind::resize;
        op.factor = factor;
        return op;
    }

    std::string label() const {
        switch (kind) {
            case Kind::jpeg: return "jpeg:" + std::to_string(quality);
            case Kind::blur: return "blur:" + std::to_string(kernel);
            case Kind::noise: {
                std::ostringstream os;
                os << "noise:" << intensity;
                return os.str();
            }
            case Kind::resize: {
                std::ostringstream os;
                os << "resize:" << factor;
                return os.str();
            }
        }
        return "?";
    }
};

struct DegradationSpec {
    std::vector<DegradationOp> chain;
    uint64_t seed = 0;

    std::string label() const {
        if (chain.empty()) return "identity";
        std::string s;
        for (size_t i = 0; i < chain.size(); ++i) {
            if (i) s += ",";
            s += chain[i].label();
        }
        return s;
    }
};

// Parse "jpeg:60,resize:0.6,blur:5,noise:0.006" into a chain.
inline DegradationSpec parse_degradation_chain(const std::string& text, uint64_t seed = 0) {
    DegradationSpec spec;
    spec.seed = seed;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find(',', pos);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(pos, end - pos);
        const size_t colon = item.find(':');
        FLOC_CHECK(colon != std::string::npos, "degradation chain: expected op:param, got '", item, "'");
        const std::string op = item.substr(0, colon);
        const std::string arg = item.substr(colon + 1);
        try {
            if (op == "jpeg")
                spec.chain.push_back(DegradationOp::jpeg(std::stoi(arg)));
            else if (op == "blur")
                spec.chain.push_back(DegradationOp::blur(std::stoi(arg)));
            else if (op == "noise")
                spec.chain.push_back(DegradationOp::noise(std::stod(arg)));
            else if (op == "resize")
                spec.chain.push_back(DegradationOp::resize(std::stod(arg)));
            else
                fail("degradation chain: unknown op '", op, "'");
        } catch (const std::invalid_argument&) {
            fail("degradation chain: bad parameter '", arg, "' for op '", op, "'");
        }
        pos = end + 1;
    }
    return spec;
}

// Apply the chain in order. An empty chain is the identity. Deterministic in
// spec.seed (only the noise op draws randomness).
inline Image degrade(const Image& image, const DegradationSpec& spec) {
    Image out = image;
    Rng rng(hash_mix(spec.seed, 0x85ebca6b));
    for (const auto& op : spec.chain) {
        switch (op.kind) {
            case DegradationOp::Kind::jpeg:
                out = jpeg_roundtrip(out, op.quality);
                break;
            case DegradationOp::Kind::blur:
                out = gaussian_blur(out, op.kernel);
                break;
            case DegradationOp::Kind::noise:
                out = add_gaussian_noise(out, std::sqrt(op.intensity), rng);
                break;
            case DegradationOp::Kind::resize: {
                const int sh = std::max(1, static_cast<int>(std::lround(out.h * op.factor)));
                const int sw = std::max(1, static_cast<int>(std::lround(out.w * op.factor)));
                if (sh == out.h && sw == out.w) break;
                Image scaled = resize_bilinear(out, sh, sw);
                out = resize_bilinear(scaled, image.h, image.w);
                break;
            }
        }
    }
    return out;
}

} // namespace floc
