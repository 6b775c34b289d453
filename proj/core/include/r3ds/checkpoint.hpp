#pragma once
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "r3ds/adamw.hpp"
#include "r3ds/params.hpp"

// Checkpoint format "R3DC" v1 (all integers and floats little-endian):
//   magic[4] version:u32 fingerprint:u64 epoch:u64 step:u64 seed:u64
//   n_entries:u32
//   entry*: name_len:u16 name trainable:u8 ndim:u8 dims:u32* data:f32*
//   has_optimizer:u8
//   state* (one per trainable entry, store order): t:u64 m:f32* v:f32*
// Parameter payloads are 32-bit floats; the resume contract is bit-exact for
// 32-bit training runs on the same platform.

namespace r3ds {

struct CheckpointMeta {
    uint64_t fingerprint = 0;
    int64_t epoch = 0;
    int64_t step = 0;
    uint64_t seed = 0;
    bool has_optimizer = false;
};

namespace ckpt_detail {

inline void put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

struct Reader {
    std::ifstream f;
    std::string path;
    int64_t offset = 0;

    explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw IoError("cannot open checkpoint: " + p);
    }
    void bytes(void* dst, int64_t n) {
        if (!f.read(reinterpret_cast<char*>(dst), n))
            throw FormatError(path + ": truncated at byte " + std::to_string(offset));
        offset += n;
    }
    uint16_t u16() {
        unsigned char b[2];
        bytes(b, 2);
        return uint16_t(b[0] | (uint16_t(b[1]) << 8));
    }
    uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
        return v;
    }
    float f32() {
        uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
};

}  // namespace ckpt_detail

// Optimizer states live alongside the store, one per entry (empty for buffers).
template <typename S>
using AdamStates = std::vector<AdamWState<S>>;

template <typename S>
AdamStates<S> init_adam_states(const ParamStore<S>& store) {
    AdamStates<S> states;
    states.reserve(store.size());
    for (const auto& e : store.entries())
        states.push_back(e.trainable ? AdamWState<S>::init(e.value.shape) : AdamWState<S>{});
    return states;
}

template <typename S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const AdamStates<S>* adam, const CheckpointMeta& meta) {
    using namespace ckpt_detail;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write("R3DC", 4);
    put_u32(f, 1);
    put_u64(f, meta.fingerprint);
    put_u64(f, uint64_t(meta.epoch));
    put_u64(f, uint64_t(meta.step));
    put_u64(f, meta.seed);
    put_u32(f, uint32_t(store.size()));
    for (const auto& e : store.entries()) {
        put_u16(f, uint16_t(e.name.size()));
        f.write(e.name.data(), std::streamsize(e.name.size()));
        f.put(e.trainable ? 1 : 0);
        f.put(char(e.value.ndim()));
        for (int64_t d : e.value.shape) put_u32(f, uint32_t(d));
        for (const S& v : e.value.data) put_f32(f, float(v));
    }
    f.put(adam ? 1 : 0);
    if (adam) {
        for (size_t i = 0; i < store.size(); ++i) {
            if (!store.entry(int(i)).trainable) continue;
            const AdamWState<S>& st = (*adam)[i];
            put_u64(f, uint64_t(st.t));
            for (const S& v : st.m.data) put_f32(f, float(v));
            for (const S& v : st.v.data) put_f32(f, float(v));
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

// Loads into an existing store whose roster must match the file exactly.
template <typename S>
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<S>& store,
                               AdamStates<S>* adam) {
    using namespace ckpt_detail;
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "R3DC", 4) != 0) throw FormatError(path + ": bad magic at byte 0");
    uint32_t version = r.u32();
    if (version != 1)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    CheckpointMeta meta;
    meta.fingerprint = r.u64();
    meta.epoch = int64_t(r.u64());
    meta.step = int64_t(r.u64());
    meta.seed = r.u64();
    uint32_t n = r.u32();
    if (n != store.size())
        throw FormatError(path + ": " + std::to_string(n) + " entries, model expects " +
                          std::to_string(store.size()));
    for (uint32_t i = 0; i < n; ++i) {
        uint16_t len = r.u16();
        std::string name(len, '\0');
        r.bytes(name.data(), len);
        unsigned char trainable, ndim;
        r.bytes(&trainable, 1);
        r.bytes(&ndim, 1);
        Shape shape(ndim);
        for (int d = 0; d < int(ndim); ++d) shape[size_t(d)] = int64_t(r.u32());
        auto& e = store.entries()[i];
        if (e.name != name || e.value.shape != shape || e.trainable != bool(trainable))
            throw FormatError(path + ": entry '" + name + "' " + shape_str(shape) +
                              " does not match model parameter '" + e.name + "' " +
                              shape_str(e.value.shape));
        for (S& v : e.value.data) v = S(r.f32());
    }
    unsigned char has_opt;
    r.bytes(&has_opt, 1);
    meta.has_optimizer = has_opt != 0;
    if (meta.has_optimizer && adam) {
        *adam = init_adam_states(store);
        for (size_t i = 0; i < store.size(); ++i) {
            if (!store.entry(int(i)).trainable) continue;
            AdamWState<S>& st = (*adam)[i];
            st.t = int64_t(r.u64());
            for (S& v : st.m.data) v = S(r.f32());
            for (S& v : st.v.data) v = S(r.f32());
        }
    }
    return meta;
}

}  // namespace r3ds
