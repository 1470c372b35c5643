#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "floc/config.hpp"
#include "floc/net.hpp"

namespace floc {

// Versioned key-value archive: a JSON metadata record (config snapshot,
// stage, seed, loss-curve digest) followed by named weight tensors stored as
// raw little-endian doubles. Round-trips bit-exactly.
struct CheckpointData {
    int format_version = 1;
    int stage = 0; // 1 after pretraining, 2 after fine-tuning
    uint64_t seed = 0;
    KvList config_kv;
    std::vector<real> loss_curve;
    uint64_t loss_digest = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    bool head_initialized() const { return stage >= 2; }

    RunConfig run_config() const { return validate_config(config_kv); }
};

inline uint64_t digest_bytes(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

constexpr char kCkptMagic[8] = {'F', 'L', 'O', 'C', 'C', 'K', 'P', '1'};

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    FLOC_CHECK(in.good(), "checkpoint '", path, "' is truncated");
    return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
    std::ofstream out(path, std::ios::binary);
    FLOC_CHECK(out.good(), "cannot open checkpoint '", path, "' for writing");
    out.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));

    nlohmann::json meta;
    meta["format_version"] = ckpt.format_version;
    meta["stage"] = ckpt.stage;
    meta["seed"] = ckpt.seed;
    meta["loss_digest"] = ckpt.loss_digest;
    meta["loss_curve"] = ckpt.loss_curve;
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : ckpt.config_kv) cfg[k] = v;
    meta["config"] = cfg;
    const std::string meta_str = meta.dump();
    detail::write_pod(out, static_cast<uint64_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    detail::write_pod(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        detail::write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::write_pod(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(real)));
    }
    FLOC_CHECK(out.good(), "short write while saving checkpoint '", path, "'");
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    FLOC_CHECK(in.good(), "cannot open checkpoint '", path, "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    FLOC_CHECK(in.good() && std::memcmp(magic, detail::kCkptMagic, 8) == 0, "'", path,
               "' is not a checkpoint (bad magic)");

    const auto meta_len = detail::read_pod<uint64_t>(in, path);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    FLOC_CHECK(in.good(), "checkpoint '", path, "' is truncated (metadata)");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const std::exception& e) {
        fail("checkpoint '", path, "' has corrupt metadata: ", e.what());
    }

    CheckpointData ckpt;
    ckpt.format_version = meta.at("format_version").get<int>();
    FLOC_CHECK(ckpt.format_version == 1, "checkpoint '", path, "' has unsupported format version ",
               ckpt.format_version);
    ckpt.stage = meta.at("stage").get<int>();
    ckpt.seed = meta.at("seed").get<uint64_t>();
    ckpt.loss_digest = meta.at("loss_digest").get<uint64_t>();
    ckpt.loss_curve = meta.at("loss_curve").get<std::vector<real>>();
    for (auto it = meta.at("config").begin(); it != meta.at("config").end(); ++it)
        ckpt.config_kv.emplace_back(it.key(), it.value().get<std::string>());

    const auto n_tensors = detail::read_pod<uint32_t>(in, path);
    ckpt.tensors.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = detail::read_pod<uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = detail::read_pod<uint32_t>(in, path);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(detail::read_pod<uint32_t>(in, path));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(real)));
        FLOC_CHECK(in.good(), "checkpoint '", path, "' is truncated (tensor '", name, "')");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

// Rebuild the model a checkpoint was saved from.
inline LocalizationModel model_from_checkpoint(const CheckpointData& ckpt) {
    const RunConfig cfg = ckpt.run_config();
    LocalizationModel model(cfg.backbone, hash_mix(ckpt.seed, 0x1157));
    model.load_state_dict(ckpt.tensors);
    return model;
}

} // namespace floc
