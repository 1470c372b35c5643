#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "floc/losses.hpp"
#include "floc/net.hpp"
#include "floc/sampler.hpp"

namespace floc {

using KvList = std::vector<std::pair<std::string, std::string>>;

// Flat "key = value" text, '#' comments, blank lines ignored.
inline KvList parse_config_text(const std::string& text, const std::string& origin) {
    KvList kv;
    size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        FLOC_CHECK(eq != std::string::npos, origin, " line ", line_no, ": expected 'key = value', got '", line, "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        FLOC_CHECK(!key.empty(), origin, " line ", line_no, ": empty key");
        kv.emplace_back(key, val);
    }
    return kv;
}

inline KvList parse_config_file(const std::string& path) {
    std::ifstream in(path);
    FLOC_CHECK(in.good(), "config file '", path, "' is not readable");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

// Every documented key with its resolved value. File keys are applied first,
// then overrides (later wins inside each list).
struct RunConfig {
    int image_size = 512;
    uint64_t seed = 0;
    real threshold = 0.5;

    BackboneConfig backbone;
    SamplerConfig sampler;
    ContrastConfig contrast;
    FocalConfig focal;

    real lr_init = 1e-4;
    real lr_min = 1e-6;
    int batch_size = 4;
    int epochs_stage1 = 20;
    int epochs_stage2 = 20;
    real plateau_factor = 0.5;
    int plateau_patience = 3;
    bool augment_stage1 = true;
    bool augment_stage2 = true;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("config key '", key, "': expected a boolean, got '", v, "'");
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const int x = std::stoi(v, &used);
        FLOC_CHECK(used == v.size(), "config key '", key, "': expected an integer, got '", v, "'");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("config key '", key, "': expected an integer, got '", v, "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        FLOC_CHECK(used == v.size(), "config key '", key, "': expected an unsigned integer, got '", v, "'");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("config key '", key, "': expected an unsigned integer, got '", v, "'");
    }
}

inline real parse_real(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const real x = std::stod(v, &used);
        FLOC_CHECK(used == v.size(), "config key '", key, "': expected a number, got '", v, "'");
        return x;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("config key '", key, "': expected a number, got '", v, "'");
    }
}

} // namespace detail

// Unknown keys are rejected; constraint violations name the key. The result
// carries every documented key so it can be echoed verbatim for provenance.
inline RunConfig validate_config(const KvList& file_kv, const KvList& overrides = {}) {
    RunConfig cfg;
    auto apply = [&](const std::string& key, const std::string& val) {
        using namespace detail;
        if (key == "image_size") {
            cfg.image_size = parse_int(key, val);
            FLOC_CHECK(cfg.image_size >= 32 && cfg.image_size % 32 == 0, "config key 'image_size': must be >= 32 ",
                       "and divisible by 32, got ", val);
        } else if (key == "seed") {
            cfg.seed = parse_u64(key, val);
        } else if (key == "threshold") {
            cfg.threshold = parse_real(key, val);
            FLOC_CHECK(cfg.threshold >= 0 && cfg.threshold <= 1, "config key 'threshold': must be in [0,1]");
        } else if (key == "backbone") {
            cfg.backbone.size = val;
            cfg.backbone.apply_size(); // validates the name
        } else if (key == "dropout_rate") {
            cfg.backbone.dropout_rate = parse_real(key, val);
            FLOC_CHECK(cfg.backbone.dropout_rate >= 0 && cfg.backbone.dropout_rate < 1,
                       "config key 'dropout_rate': must be in [0,1), got ", val);
        } else if (key == "contrast_dim") {
            cfg.backbone.contrast_dim = parse_int(key, val);
            FLOC_CHECK(cfg.backbone.contrast_dim >= 1, "config key 'contrast_dim': must be >= 1");
        } else if (key == "temperature") {
            cfg.contrast.temperature = parse_real(key, val);
            FLOC_CHECK(cfg.contrast.temperature > 0, "config key 'temperature': must be > 0, got ", val);
        } else if (key == "normalize_embeddings") {
            cfg.contrast.normalize_embeddings = parse_bool(key, val);
        } else if (key == "loss_within") {
            cfg.contrast.loss_within = parse_bool(key, val);
        } else if (key == "loss_cross_scale") {
            cfg.contrast.loss_cross_scale = parse_bool(key, val);
        } else if (key == "loss_cross_modality") {
            cfg.contrast.loss_cross_modality = parse_bool(key, val);
        } else if (key == "supcon_denominator") {
            cfg.contrast.supcon_denominator = parse_bool(key, val);
        } else if (key == "anchors_per_class") {
            cfg.sampler.anchors_per_class = parse_int(key, val);
            FLOC_CHECK(cfg.sampler.anchors_per_class >= 1, "config key 'anchors_per_class': must be >= 1");
        } else if (key == "positives_per_anchor") {
            cfg.sampler.positives_per_anchor = parse_int(key, val);
            FLOC_CHECK(cfg.sampler.positives_per_anchor >= 1, "config key 'positives_per_anchor': must be >= 1");
        } else if (key == "negatives_per_anchor") {
            cfg.sampler.negatives_per_anchor = parse_int(key, val);
            FLOC_CHECK(cfg.sampler.negatives_per_anchor >= 1, "config key 'negatives_per_anchor': must be >= 1");
        } else if (key == "shared_pools") {
            cfg.sampler.shared_pools = parse_bool(key, val);
        } else if (key == "focal_alpha") {
            cfg.focal.alpha = parse_real(key, val);
            FLOC_CHECK(cfg.focal.alpha >= 0 && cfg.focal.alpha <= 1, "config key 'focal_alpha': must be in [0,1]");
        } else if (key == "focal_gamma") {
            cfg.focal.gamma = parse_real(key, val);
            FLOC_CHECK(cfg.focal.gamma >= 0, "config key 'focal_gamma': must be >= 0");
        } else if (key == "lr_init") {
            cfg.lr_init = parse_real(key, val);
            FLOC_CHECK(cfg.lr_init > 0, "config key 'lr_init': must be > 0, got ", val);
        } else if (key == "lr_min") {
            cfg.lr_min = parse_real(key, val);
            FLOC_CHECK(cfg.lr_min > 0, "config key 'lr_min': must be > 0");
        } else if (key == "batch_size") {
            cfg.batch_size = parse_int(key, val);
            FLOC_CHECK(cfg.batch_size >= 1, "config key 'batch_size': must be >= 1");
        } else if (key == "epochs_stage1") {
            cfg.epochs_stage1 = parse_int(key, val);
            FLOC_CHECK(cfg.epochs_stage1 >= 1, "config key 'epochs_stage1': must be >= 1");
        } else if (key == "epochs_stage2") {
            cfg.epochs_stage2 = parse_int(key, val);
            FLOC_CHECK(cfg.epochs_stage2 >= 1, "config key 'epochs_stage2': must be >= 1");
        } else if (key == "plateau_factor") {
            cfg.plateau_factor = parse_real(key, val);
            FLOC_CHECK(cfg.plateau_factor > 0 && cfg.plateau_factor < 1,
                       "config key 'plateau_factor': must be in (0,1)");
        } else if (key == "plateau_patience") {
            cfg.plateau_patience = parse_int(key, val);
            FLOC_CHECK(cfg.plateau_patience >= 1, "config key 'plateau_patience': must be >= 1");
        } else if (key == "augment_stage1") {
            cfg.augment_stage1 = parse_bool(key, val);
        } else if (key == "augment_stage2") {
            cfg.augment_stage2 = parse_bool(key, val);
        } else {
            fail("unknown config key '", key, "'");
        }
    };
    for (const auto& [k, v] : file_kv) apply(k, v);
    for (const auto& [k, v] : overrides) apply(k, v);
    FLOC_CHECK(cfg.backbone.contrast_dim >= 1, "contrast_dim must be >= 1");
    return cfg;
}

inline std::string format_real(real v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline KvList config_to_kv(const RunConfig& c) {
    KvList kv;
    auto add = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    add("image_size", std::to_string(c.image_size));
    add("seed", std::to_string(c.seed));
    add("threshold", format_real(c.threshold));
    add("backbone", c.backbone.size);
    add("dropout_rate", format_real(c.backbone.dropout_rate));
    add("contrast_dim", std::to_string(c.backbone.contrast_dim));
    add("temperature", format_real(c.contrast.temperature));
    add("normalize_embeddings", c.contrast.normalize_embeddings ? "true" : "false");
    add("loss_within", c.contrast.loss_within ? "true" : "false");
    add("loss_cross_scale", c.contrast.loss_cross_scale ? "true" : "false");
    add("loss_cross_modality", c.contrast.loss_cross_modality ? "true" : "false");
    add("supcon_denominator", c.contrast.supcon_denominator ? "true" : "false");
    add("anchors_per_class", std::to_string(c.sampler.anchors_per_class));
    add("positives_per_anchor", std::to_string(c.sampler.positives_per_anchor));
    add("negatives_per_anchor", std::to_string(c.sampler.negatives_per_anchor));
    add("shared_pools", c.sampler.shared_pools ? "true" : "false");
    add("focal_alpha", format_real(c.focal.alpha));
    add("focal_gamma", format_real(c.focal.gamma));
    add("lr_init", format_real(c.lr_init));
    add("lr_min", format_real(c.lr_min));
    add("batch_size", std::to_string(c.batch_size));
    add("epochs_stage1", std::to_string(c.epochs_stage1));
    add("epochs_stage2", std::to_string(c.epochs_stage2));
    add("plateau_factor", format_real(c.plateau_factor));
    add("plateau_patience", std::to_string(c.plateau_patience));
    add("augment_stage1", c.augment_stage1 ? "true" : "false");
    add("augment_stage2", c.augment_stage2 ? "true" : "false");
    return kv;
}

inline void write_config_echo(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    FLOC_CHECK(out.good(), "cannot write resolved config to '", path, "'");
    for (const auto& [k, v] : config_to_kv(cfg)) out << k << " = " << v << "\n";
}

} // namespace floc
