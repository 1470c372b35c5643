#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "floc/codec.hpp"
#include "floc/image.hpp"

namespace floc {

// An RGB image with its binary tamper mask; the unit of ingestion.
struct ImageSample {
    Image image;
    Mask mask;
    std::string dataset_id;
    std::string sample_id;
};

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
    std::string dataset_id;
    std::string sample_id;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

// JSON-lines manifest, one {"image","mask","dataset"} record per line.
// Relative paths resolve against the manifest's directory.
inline Manifest load_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream in(path);
    FLOC_CHECK(in.good(), "load_manifest: cannot open '", path, "'");
    const fs::path base = fs::path(path).parent_path();

    Manifest m;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail("load_manifest: '", path, "' line ", line_no, ": invalid JSON (", e.what(), ")");
        }
        for (const char* key : {"image", "mask", "dataset"})
            FLOC_CHECK(rec.contains(key) && rec[key].is_string(), "load_manifest: '", path, "' line ", line_no,
                       ": missing or non-string key \"", key, "\"");
        ManifestEntry e;
        auto resolve = [&](const std::string& p) {
            fs::path fp(p);
            if (fp.is_relative()) fp = base / fp;
            return fp.string();
        };
        e.image_path = resolve(rec["image"].get<std::string>());
        e.mask_path = resolve(rec["mask"].get<std::string>());
        e.dataset_id = rec["dataset"].get<std::string>();
        e.sample_id = fs::path(e.image_path).stem().string();
        FLOC_CHECK(fs::exists(e.image_path), "load_manifest: '", path, "' line ", line_no,
                   ": image path does not resolve: ", e.image_path);
        FLOC_CHECK(fs::exists(e.mask_path), "load_manifest: '", path, "' line ", line_no,
                   ": mask path does not resolve: ", e.mask_path);
        FLOC_CHECK(seen.emplace(e.dataset_id, e.sample_id).second, "load_manifest: '", path, "' line ", line_no,
                   ": duplicate sample_id '", e.sample_id, "' within dataset '", e.dataset_id, "'");
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    FLOC_CHECK(out.good(), "save_manifest: cannot open '", path, "' for writing");
    for (const auto& e : m.entries) {
        nlohmann::json rec{{"image", e.image_path}, {"mask", e.mask_path}, {"dataset", e.dataset_id}};
        out << rec.dump() << "\n";
    }
}

inline Mask mask_from_u8(const U8Image& raw) {
    FLOC_CHECK(raw.c == 1, "mask must be single-channel, got c=", raw.c);
    Mask m(raw.h, raw.w);
    for (size_t i = 0; i < raw.data.size(); ++i) m.data[i] = raw.data[i] > 127 ? 1 : 0;
    return m;
}

// Image resized bilinearly to target x target; mask resized nearest-neighbor
// in its raw 8-bit values, then thresholded at 127 to {0,1}.
inline ImageSample load_sample(const ManifestEntry& entry, int target_size = 512) {
    FLOC_CHECK(target_size >= 32, "load_sample: target_size must be >= 32");
    U8Image raw_img = load_image_file(entry.image_path);
    if (raw_img.c == 1) {
        U8Image rgb(raw_img.h, raw_img.w, 3);
        for (int y = 0; y < raw_img.h; ++y)
            for (int x = 0; x < raw_img.w; ++x)
                for (int ch = 0; ch < 3; ++ch) rgb.at(y, x, ch) = raw_img.at(y, x, 0);
        raw_img = std::move(rgb);
    }
    U8Image raw_mask = load_image_file(entry.mask_path);
    FLOC_CHECK(raw_mask.c == 1, "load_sample: mask '", entry.mask_path, "' must be single-channel");
    FLOC_CHECK(raw_img.h == raw_mask.h && raw_img.w == raw_mask.w, "load_sample: image ", raw_img.h, "x", raw_img.w,
               " and mask ", raw_mask.h, "x", raw_mask.w, " dimensions differ for '", entry.image_path, "'");

    ImageSample s;
    s.dataset_id = entry.dataset_id;
    s.sample_id = entry.sample_id;
    s.image = resize_bilinear(to_real(raw_img), target_size, target_size);
    const auto resized = resize_nearest_plane(raw_mask.data, raw_mask.h, raw_mask.w, target_size, target_size);
    s.mask.h = target_size;
    s.mask.w = target_size;
    s.mask.data.resize(resized.size());
    for (size_t i = 0; i < resized.size(); ++i) s.mask.data[i] = resized[i] > 127 ? 1 : 0;
    return s;
}

} // namespace floc
