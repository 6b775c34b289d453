#pragma once
#include <cmath>
#include <string>
#include <vector>

#include "r3ds/config.hpp"
#include "r3ds/params.hpp"
#include "r3ds/window.hpp"

// Hierarchical shifted-window attention encoder. A feature map is a
// (batch, height, width, channels) tensor; channels double and the grid
// halves after each of the first three stages. Even-indexed blocks attend in
// regular windows, odd-indexed blocks in cyclically shifted windows with the
// cross-boundary attention mask.

namespace r3ds {

// Stochastic depth on the residual branch: per-sample drop with 1/(1-rate)
// rescaling. Identity when rate is 0 or no RNG is supplied (eval).
template <typename S>
TensorT<S> drop_path(Tape<S>* tp, const TensorT<S>& x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    Shape ms(x.shape.size(), 1);
    ms[0] = x.shape[0];
    TensorT<S> mask = TensorT<S>::zeros(ms);
    for (int64_t i = 0; i < ms[0]; ++i)
        mask.data[size_t(i)] = rng->next_double() >= rate ? S(1.0 / (1.0 - rate)) : S(0);
    return mul(tp, x, mask);
}

struct AttnParamIds {
    int q_w = -1, q_b = -1, k_w = -1, k_b = -1, v_w = -1, v_b = -1;
    int proj_w = -1, proj_b = -1;
    int bias_table = -1;                                     // v1
    int logit_scale = -1, cpb1_w = -1, cpb1_b = -1, cpb2_w = -1;  // v2
};

struct BlockParamIds {
    AttnParamIds attn;
    int norm1_g = -1, norm1_b = -1, norm2_g = -1, norm2_b = -1;
    int fc1_w = -1, fc1_b = -1, fc2_w = -1, fc2_b = -1;
    int shift = 0;  // cyclic shift of this block (0 for W-MSA)
};

struct MergeParamIds {
    int norm_g = -1, norm_b = -1, reduce_w = -1;
};

template <typename S>
struct StageGeom {
    int h = 0, w = 0, c = 0, M = 0, heads = 0, shift = 0;
    std::vector<int64_t> relpos_idx;  // T^2 table lookups
    TensorT<S> mask;                  // (nW,1,T,T); present iff shift > 0
    TensorT<S> cpb_coords;            // ((2M-1)^2, 2); v2 only
};

template <typename S>
struct SwinEncoder {
    EncoderConfig cfg;
    int pe_w = -1, pe_b = -1, pe_ng = -1, pe_nb = -1;
    int final_ng = -1, final_nb = -1;
    std::vector<std::vector<BlockParamIds>> blocks;  // [stage][block]
    std::vector<MergeParamIds> merges;               // after stages 0..2
    std::vector<StageGeom<S>> geom;                  // per stage
    std::vector<int64_t> embed_idx;

    static SwinEncoder build(const EncoderConfig& cfg, ParamStore<S>& store, uint64_t seed) {
        cfg.validate();
        SwinEncoder enc;
        enc.cfg = cfg;
        auto tn = [&](const std::string& name, Shape shape) {
            return store.add(name, init_trunc_normal<S>(seed, name, std::move(shape), 0.02));
        };
        auto zeros = [&](const std::string& name, Shape shape) {
            return store.add(name, TensorT<S>::zeros(std::move(shape)));
        };
        auto ones = [&](const std::string& name, Shape shape) {
            return store.add(name, TensorT<S>::full(std::move(shape), S(1)));
        };

        int64_t pdim = int64_t(cfg.patch_size) * cfg.patch_size * 3;
        enc.pe_w = tn("enc.patch_embed.proj.weight", {pdim, cfg.embed_dim});
        enc.pe_b = zeros("enc.patch_embed.proj.bias", {cfg.embed_dim});
        enc.pe_ng = ones("enc.patch_embed.norm.gamma", {cfg.embed_dim});
        enc.pe_nb = zeros("enc.patch_embed.norm.beta", {cfg.embed_dim});
        enc.embed_idx = patch_embed_indices(cfg.image_size, cfg.patch_size);

        for (int s = 0; s < 4; ++s) {
            StageGeom<S> g;
            g.h = g.w = cfg.grid_side(s);
            g.c = cfg.stage_channels(s);
            g.M = cfg.stage_window(s);
            g.heads = cfg.heads[size_t(s)];
            g.shift = cfg.stage_shifts(s) ? g.M / 2 : 0;
            g.relpos_idx = relative_position_index(g.M);
            if (g.shift > 0) g.mask = build_shift_mask<S>(g.h, g.w, g.M, g.shift);
            if (cfg.variant == AttnVariant::V2Cosine) g.cpb_coords = cpb_log_coords<S>(g.M);
            enc.geom.push_back(std::move(g));

            std::vector<BlockParamIds> stage_blocks;
            int64_t c = cfg.stage_channels(s);
            int64_t hidden = int64_t(std::lround(cfg.mlp_ratio * double(c)));
            for (int j = 0; j < cfg.depths[size_t(s)]; ++j) {
                std::string base =
                    "enc.stage" + std::to_string(s) + ".block" + std::to_string(j) + ".";
                BlockParamIds b;
                b.shift = (j % 2 == 1) ? enc.geom.back().shift : 0;
                b.norm1_g = ones(base + "norm1.gamma", {c});
                b.norm1_b = zeros(base + "norm1.beta", {c});
                b.norm2_g = ones(base + "norm2.gamma", {c});
                b.norm2_b = zeros(base + "norm2.beta", {c});
                b.attn.q_w = tn(base + "attn.q.weight", {c, c});
                b.attn.q_b = zeros(base + "attn.q.bias", {c});
                b.attn.k_w = tn(base + "attn.k.weight", {c, c});
                b.attn.k_b = zeros(base + "attn.k.bias", {c});
                b.attn.v_w = tn(base + "attn.v.weight", {c, c});
                b.attn.v_b = zeros(base + "attn.v.bias", {c});
                b.attn.proj_w = tn(base + "attn.proj.weight", {c, c});
                b.attn.proj_b = zeros(base + "attn.proj.bias", {c});
                int64_t H = cfg.heads[size_t(s)];
                if (cfg.variant == AttnVariant::V1BiasTable) {
                    b.attn.bias_table =
                        tn(base + "attn.rel_bias_table", {relative_table_size(enc.geom.back().M), H});
                } else {
                    b.attn.logit_scale = store.add(base + "attn.logit_scale",
                                                   TensorT<S>::full({H}, S(std::log(10.0))));
                    b.attn.cpb1_w = tn(base + "attn.cpb.fc1.weight", {2, cfg.cpb_hidden});
                    b.attn.cpb1_b = zeros(base + "attn.cpb.fc1.bias", {cfg.cpb_hidden});
                    b.attn.cpb2_w = tn(base + "attn.cpb.fc2.weight", {cfg.cpb_hidden, H});
                }
                b.fc1_w = tn(base + "mlp.fc1.weight", {c, hidden});
                b.fc1_b = zeros(base + "mlp.fc1.bias", {hidden});
                b.fc2_w = tn(base + "mlp.fc2.weight", {hidden, c});
                b.fc2_b = zeros(base + "mlp.fc2.bias", {c});
                stage_blocks.push_back(b);
            }
            enc.blocks.push_back(std::move(stage_blocks));

            if (s < 3) {
                std::string base = "enc.stage" + std::to_string(s) + ".merge.";
                MergeParamIds m;
                m.norm_g = ones(base + "norm.gamma", {4 * c});
                m.norm_b = zeros(base + "norm.beta", {4 * c});
                m.reduce_w = tn(base + "reduce.weight", {4 * c, 2 * c});
                enc.merges.push_back(m);
            }
        }
        enc.final_ng = ones("enc.norm.gamma", {cfg.out_channels()});
        enc.final_nb = zeros("enc.norm.beta", {cfg.out_channels()});
        return enc;
    }

    // Multi-head attention over stacked windows (N, T, c); mask may be null.
    TensorT<S> attend_windows(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& windows,
                              const TensorT<S>* mask, int stage, const AttnParamIds& a) const {
        const StageGeom<S>& G = geom[size_t(stage)];
        const int64_t N = windows.shape[0], T = windows.shape[1], c = windows.shape[2];
        const int64_t H = G.heads, hd = c / H;
        if (c % H != 0)
            throw ConfigError("window_attention: channels " + std::to_string(c) +
                              " not divisible by heads " + std::to_string(H));

        auto split_heads = [&](const TensorT<S>& t) {
            return permute(tp, reshape(tp, t, {N, T, H, hd}), {0, 2, 1, 3});
        };
        TensorT<S> q = split_heads(linear(tp, windows, P.value(a.q_w), P.value(a.q_b)));
        TensorT<S> k = split_heads(linear(tp, windows, P.value(a.k_w), P.value(a.k_b)));
        TensorT<S> v = split_heads(linear(tp, windows, P.value(a.v_w), P.value(a.v_b)));

        TensorT<S> scores, bias;
        if (cfg.variant == AttnVariant::V1BiasTable) {
            q = scale(tp, q, 1.0 / std::sqrt(double(hd)));
            scores = matmul(tp, q, transpose_last2(tp, k));
            bias = reshape(tp, permute(tp, gather_rows(tp, P.value(a.bias_table), G.relpos_idx), {1, 0}),
                           {H, T, T});
        } else {
            TensorT<S> qh = l2_normalize_lastdim(tp, q);
            TensorT<S> kh = l2_normalize_lastdim(tp, k);
            scores = matmul(tp, qh, transpose_last2(tp, kh));
            TensorT<S> ls =
                reshape(tp, exp_clamp(tp, P.value(a.logit_scale), std::log(100.0)), {H, 1, 1});
            scores = mul(tp, scores, ls);
            TensorT<S> hid = relu(tp, linear(tp, G.cpb_coords, P.value(a.cpb1_w), P.value(a.cpb1_b)));
            TensorT<S> logits = matmul(tp, hid, P.value(a.cpb2_w));  // ((2M-1)^2, H)
            TensorT<S> gathered = gather_rows(tp, logits, G.relpos_idx);
            bias = scale(tp, sigmoid(tp, reshape(tp, permute(tp, gathered, {1, 0}), {H, T, T})), 16.0);
        }
        scores = add(tp, scores, bias);
        if (mask != nullptr) {
            int64_t nw = mask->shape[0];
            if (N % nw != 0)
                throw ShapeError("window_attention: window count " + std::to_string(N) +
                                 " not a multiple of mask windows " + std::to_string(nw));
            scores = reshape(tp, scores, {N / nw, nw, H, T, T});
            scores = add(tp, scores, *mask);
            scores = reshape(tp, scores, {N, H, T, T});
        }
        TensorT<S> attn = softmax_lastdim(tp, scores);
        TensorT<S> out = matmul(tp, attn, v);                       // (N,H,T,hd)
        out = reshape(tp, permute(tp, out, {0, 2, 1, 3}), {N, T, c});
        return linear(tp, out, P.value(a.proj_w), P.value(a.proj_b));
    }

    // One transformer block: (S)W-MSA sub-layer + MLP sub-layer, both with
    // residuals. v1 normalizes before each sub-layer, v2 after (res-post-norm).
    TensorT<S> block_forward(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& x, int stage,
                             const BlockParamIds& bp, Rng* dp_rng) const {
        const StageGeom<S>& G = geom[size_t(stage)];
        const bool pre_norm = cfg.variant == AttnVariant::V1BiasTable;

        TensorT<S> t = pre_norm ? layer_norm(tp, x, P.value(bp.norm1_g), P.value(bp.norm1_b)) : x;
        if (bp.shift > 0) t = cyclic_shift(tp, t, bp.shift);
        t = window_partition(tp, t, G.M);
        t = attend_windows(tp, P, t, bp.shift > 0 ? &G.mask : nullptr, stage, bp.attn);
        t = window_reverse(tp, t, G.h, G.w, G.M);
        if (bp.shift > 0) t = cyclic_unshift(tp, t, bp.shift);
        if (!pre_norm) t = layer_norm(tp, t, P.value(bp.norm1_g), P.value(bp.norm1_b));
        TensorT<S> y = add(tp, x, drop_path(tp, t, cfg.drop_path, dp_rng));

        TensorT<S> m = pre_norm ? layer_norm(tp, y, P.value(bp.norm2_g), P.value(bp.norm2_b)) : y;
        m = reshape(tp, m, {y.shape[0], int64_t(G.h) * G.w, int64_t(G.c)});
        m = linear(tp, m, P.value(bp.fc1_w), P.value(bp.fc1_b));
        m = gelu(tp, m);
        m = linear(tp, m, P.value(bp.fc2_w), P.value(bp.fc2_b));
        m = reshape(tp, m, y.shape);
        if (!pre_norm) m = layer_norm(tp, m, P.value(bp.norm2_g), P.value(bp.norm2_b));
        return add(tp, y, drop_path(tp, m, cfg.drop_path, dp_rng));
    }

    // Concat 2x2 neighborhoods, norm, project 4c -> 2c.
    TensorT<S> merge_forward(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& x,
                             const MergeParamIds& m) const {
        int64_t b = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3];
        if (h % 2 != 0 || w % 2 != 0)
            throw ShapeError("patch_merging: odd grid " + shape_str(x.shape));
        std::vector<int64_t> idx = patch_merge_indices(int(h), int(w), int(c));
        TensorT<S> t = gather_per_slice(tp, x, idx, {b, h / 2, w / 2, 4 * c});
        t = layer_norm(tp, t, P.value(m.norm_g), P.value(m.norm_b));
        return matmul(tp, t, P.value(m.reduce_w));
    }

    // (b, 3, S, S) image batch -> (b, S/8p, S/8p, 8C) feature map.
    TensorT<S> forward(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& images,
                       Rng* dp_rng = nullptr) const {
        if (images.ndim() != 4 || images.shape[1] != 3 || images.shape[2] != cfg.image_size ||
            images.shape[3] != cfg.image_size)
            throw ConfigError("encoder: expected (b,3," + std::to_string(cfg.image_size) + "," +
                              std::to_string(cfg.image_size) + ") input, got " +
                              shape_str(images.shape));
        int64_t b = images.shape[0];
        int64_t g0 = cfg.base_grid();
        int64_t pdim = int64_t(cfg.patch_size) * cfg.patch_size * 3;
        TensorT<S> x = gather_per_slice(tp, images, embed_idx, {b, g0 * g0, pdim});
        x = linear(tp, x, P.value(pe_w), P.value(pe_b));
        x = layer_norm(tp, x, P.value(pe_ng), P.value(pe_nb));
        x = reshape(tp, x, {b, g0, g0, int64_t(cfg.embed_dim)});
        for (int s = 0; s < 4; ++s) {
            for (const BlockParamIds& bp : blocks[size_t(s)])
                x = block_forward(tp, P, x, s, bp, dp_rng);
            if (s < 3) x = merge_forward(tp, P, x, merges[size_t(s)]);
        }
        return layer_norm(tp, x, P.value(final_ng), P.value(final_nb));
    }
};

}  // namespace r3ds
