#pragma once
#include <algorithm>
#include <array>
#include <cstdint>
#include <string>

#include "r3ds/errors.hpp"

namespace r3ds {

enum class AttnVariant { V1BiasTable, V2Cosine };

const char* attn_variant_name(AttnVariant v);
AttnVariant attn_variant_from(const std::string& s);

// Hierarchical encoder: four stages, channels double and the grid halves at
// each boundary. Window size is clamped to the stage grid when the grid is
// smaller; a stage whose grid equals its window is a single window and runs
// unshifted (there is no boundary to cross).
struct EncoderConfig {
    int image_size = 64;
    int patch_size = 4;
    int embed_dim = 16;  // C
    std::array<int, 4> depths{1, 1, 2, 1};
    std::array<int, 4> heads{1, 2, 4, 8};
    int window = 4;  // M
    double mlp_ratio = 4.0;
    AttnVariant variant = AttnVariant::V2Cosine;
    double drop_path = 0.0;
    int cpb_hidden = 32;        // v2 position-bias MLP width
    bool disable_shift = false; // ablation: run every block unshifted

    void validate() const;
    int base_grid() const { return image_size / patch_size; }
    int grid_side(int stage) const { return base_grid() >> stage; }
    int stage_channels(int stage) const { return embed_dim << stage; }
    int stage_window(int stage) const { return std::min(window, grid_side(stage)); }
    // True when stage geometry allows shifted windows (more than one window).
    bool stage_shifts(int stage) const {
        return !disable_shift && grid_side(stage) > stage_window(stage);
    }
    int out_side() const { return grid_side(3); }
    int out_channels() const { return stage_channels(3); }
    int out_features() const { return out_side() * out_side() * out_channels(); }

    static EncoderConfig preset(const std::string& name);  // tiny | desk | paper
};

// Seed volume plus three transposed-conv doubling blocks and a 1x1x1 head:
// 4^3 -> 8^3 -> 16^3 -> 32^3.
struct DecoderConfig {
    int seed_side = 4;
    int seed_channels = 64;  // c0
    std::array<int, 3> up_channels{32, 16, 8};

    void validate() const;
    int out_side() const { return seed_side * 8; }

    static DecoderConfig preset(const std::string& name);
};

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-2;
    int epochs = 50;
    int batch_size = 4;
    uint64_t seed = 1;
    int checkpoint_every = 0;  // steps between checkpoints, 0 = final only
    std::string dataset;

    void validate() const;
    static TrainConfig preset(const std::string& name);  // desk | paper
};

struct FullConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    TrainConfig train;

    void validate() const;
};

// Line-oriented "key = value" config with [encoder]/[decoder]/[train]
// sections; '#' comments; unknown keys or sections are errors. A "preset"
// key loads that preset, later keys override individual fields.
FullConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
FullConfig load_config(const std::string& path);

// Canonical resolved form: fixed key order, one value per line. The
// fingerprint hashes this text, so any semantic difference changes it.
std::string canonical_config(const FullConfig& cfg);
uint64_t config_fingerprint(const FullConfig& cfg);
std::string fingerprint_hex(uint64_t fp);

}  // namespace r3ds
