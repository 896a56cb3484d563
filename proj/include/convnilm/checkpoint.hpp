#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "convnilm/model.hpp"

namespace convnilm {

// Binary checkpoint container, little-endian throughout.
//
//   magic   "CNN1"
//   header  9 x i64  N L S B H P X R C
//           u8 causal, u8 glu, f64 leaky_slope
//           u8 has_scale, f64 scale_min_w, f64 scale_max_w
//   blobs   u32 count, then per blob:
//           u32 name_len, name bytes, u32 rank, i64 dims..., f64 data...
//
// Parameter payloads are always stored as 64-bit floats; loading into a
// 32-bit model narrows on read.
namespace ckpt_detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& os, T v) {
    put_bytes(os, &v, sizeof(T));
}

inline void get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw DataError("checkpoint truncated");
}

template <typename T>
T get(std::istream& is) {
    T v;
    get_bytes(is, &v, sizeof(T));
    return v;
}

} // namespace ckpt_detail

struct CheckpointScale {
    bool present = false;
    double min_w = 0.0;
    double max_w = 0.0;
};

template <typename S>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParamsT<S>& params, const CheckpointScale& scale = {}) {
    using namespace ckpt_detail;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write("CNN1", 4);
    for (int64_t v : {cfg.N, cfg.L, cfg.S, cfg.B, cfg.H, cfg.P, cfg.X, cfg.R, cfg.C}) put(os, v);
    put<uint8_t>(os, cfg.causal ? 1 : 0);
    put<uint8_t>(os, cfg.glu ? 1 : 0);
    put(os, cfg.leaky_slope);
    put<uint8_t>(os, scale.present ? 1 : 0);
    put(os, scale.min_w);
    put(os, scale.max_w);

    auto entries = params.entries();
    put<uint32_t>(os, static_cast<uint32_t>(entries.size()));
    for (auto& [name, t] : entries) {
        put<uint32_t>(os, static_cast<uint32_t>(name.size()));
        put_bytes(os, name.data(), name.size());
        put<uint32_t>(os, static_cast<uint32_t>(t->shape.size()));
        for (int64_t d : t->shape) put(os, d);
        for (int64_t i = 0; i < t->numel(); ++i) put(os, static_cast<double>(t->ptr()[i]));
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

template <typename S>
void load_checkpoint(const std::string& path, ModelConfig& cfg,
                     ModelParamsT<S>& params, CheckpointScale& scale) {
    using namespace ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    get_bytes(is, magic, 4);
    if (std::memcmp(magic, "CNN1", 4) != 0) throw DataError("bad checkpoint magic in " + path);

    cfg.N = get<int64_t>(is);
    cfg.L = get<int64_t>(is);
    cfg.S = get<int64_t>(is);
    cfg.B = get<int64_t>(is);
    cfg.H = get<int64_t>(is);
    cfg.P = get<int64_t>(is);
    cfg.X = get<int64_t>(is);
    cfg.R = get<int64_t>(is);
    cfg.C = get<int64_t>(is);
    cfg.causal = get<uint8_t>(is) != 0;
    cfg.glu = get<uint8_t>(is) != 0;
    cfg.leaky_slope = get<double>(is);
    scale.present = get<uint8_t>(is) != 0;
    scale.min_w = get<double>(is);
    scale.max_w = get<double>(is);
    cfg.validate();

    params = init_params<S>(cfg, 0);
    auto entries = params.entries();
    uint32_t count = get<uint32_t>(is);
    if (count != entries.size()) throw DataError("checkpoint blob count mismatch");
    for (auto& [name, t] : entries) {
        uint32_t name_len = get<uint32_t>(is);
        std::string got(name_len, '\0');
        get_bytes(is, got.data(), name_len);
        if (got != name) throw DataError("checkpoint blob order mismatch: expected " + name + ", got " + got);
        uint32_t rank = get<uint32_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = get<int64_t>(is);
        if (shape != t->shape) throw DataError("checkpoint blob " + name + " has shape " + shape_str(shape) +
                                               ", expected " + shape_str(t->shape));
        for (int64_t i = 0; i < t->numel(); ++i) t->ptr()[i] = static_cast<S>(get<double>(is));
    }
}

} // namespace convnilm
