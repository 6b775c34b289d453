#pragma once
#include <array>
#include <cmath>
#include <string>

#include "r3ds/config.hpp"
#include "r3ds/nn3d.hpp"
#include "r3ds/params.hpp"

// CNN voxel decoder: flatten the encoder tokens, project to a c0 x 4^3 seed
// volume, then three (transposed conv -> batch norm -> relu) doubling blocks
// and a 1x1x1 sigmoid head. No attention anywhere in this module.

namespace r3ds {

template <typename S>
struct VoxelDecoder {
    DecoderConfig cfg;
    int64_t in_features = 0;
    int proj_w = -1, proj_b = -1;
    struct UpIds {
        int conv_w = -1, conv_b = -1, bn_g = -1, bn_b = -1, bn_rm = -1, bn_rv = -1;
    };
    std::array<UpIds, 3> ups;
    int head_w = -1, head_b = -1;

    static VoxelDecoder build(const DecoderConfig& cfg, int64_t in_features, ParamStore<S>& store,
                              uint64_t seed) {
        cfg.validate();
        if (in_features < 1) throw ConfigError("decoder: encoder hand-off must be non-empty");
        VoxelDecoder dec;
        dec.cfg = cfg;
        dec.in_features = in_features;
        int64_t seed_elems = int64_t(cfg.seed_side) * cfg.seed_side * cfg.seed_side;
        dec.proj_w = store.add("dec.proj.weight",
                               init_trunc_normal<S>(seed, "dec.proj.weight",
                                                    {in_features, seed_elems * cfg.seed_channels},
                                                    0.02));
        dec.proj_b = store.add("dec.proj.bias",
                               TensorT<S>::zeros({seed_elems * cfg.seed_channels}));
        int64_t cin = cfg.seed_channels;
        for (int k = 0; k < 3; ++k) {
            int64_t cout = cfg.up_channels[size_t(k)];
            std::string base = "dec.up" + std::to_string(k) + ".";
            double std_w = std::sqrt(2.0 / double(cin * 64));
            UpIds u;
            u.conv_w = store.add(base + "conv.weight",
                                 init_normal<S>(seed, base + "conv.weight", {cin, cout, 4, 4, 4},
                                                std_w));
            u.conv_b = store.add(base + "conv.bias", TensorT<S>::zeros({cout}));
            u.bn_g = store.add(base + "bn.gamma", TensorT<S>::full({cout}, S(1)));
            u.bn_b = store.add(base + "bn.beta", TensorT<S>::zeros({cout}));
            u.bn_rm = store.add(base + "bn.running_mean", TensorT<S>::zeros({cout}), false);
            u.bn_rv = store.add(base + "bn.running_var", TensorT<S>::full({cout}, S(1)), false);
            dec.ups[size_t(k)] = u;
            cin = cout;
        }
        dec.head_w = store.add("dec.head.weight",
                               init_normal<S>(seed, "dec.head.weight", {cin, 1},
                                              std::sqrt(1.0 / double(cin))));
        dec.head_b = store.add("dec.head.bias", TensorT<S>::zeros({1}));
        return dec;
    }

    // (b,h,w,c) feature map -> (b, c0, 4, 4, 4) seed volume; the projection
    // output is laid out (channel, z, y, x), channel slowest.
    TensorT<S> project(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& fm) const {
        int64_t b = fm.shape[0];
        TensorT<S> flat = reshape(tp, fm, {b, fm.numel() / b});
        if (flat.shape[1] != in_features)
            throw ShapeError("decoder: feature map " + shape_str(fm.shape) + " flattens to " +
                             std::to_string(flat.shape[1]) + ", expected " +
                             std::to_string(in_features));
        TensorT<S> x = linear(tp, flat, P.value(proj_w), P.value(proj_b));
        int64_t g = cfg.seed_side;
        return reshape(tp, x, {b, int64_t(cfg.seed_channels), g, g, g});
    }

    TensorT<S> upsample(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& x, int k,
                        bool training) const {
        const UpIds& u = ups[size_t(k)];
        TensorT<S> t = conv_transpose3d(tp, x, P.value(u.conv_w), P.value(u.conv_b));
        t = batch_norm3d(tp, t, P.value(u.bn_g), P.value(u.bn_b), P.value(u.bn_rm),
                         P.value(u.bn_rv), training);
        return relu(tp, t);
    }

    // -> (b, 32, 32, 32) occupancy probabilities, strictly inside (0,1).
    TensorT<S> forward(Tape<S>* tp, ParamStore<S>& P, const TensorT<S>& fm, bool training) const {
        TensorT<S> x = project(tp, P, fm);
        for (int k = 0; k < 3; ++k) x = upsample(tp, P, x, k, training);
        x = conv3d_1x1(tp, x, P.value(head_w), P.value(head_b));
        x = sigmoid(tp, x);
        int64_t side = cfg.out_side();
        return reshape(tp, x, {x.shape[0], side, side, side});
    }
};

}  // namespace r3ds
