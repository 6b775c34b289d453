#pragma once
#include "r3ds/decoder.hpp"
#include "r3ds/metrics.hpp"
#include "r3ds/swin.hpp"

namespace r3ds {

// Encoder + decoder over one parameter store: images -> voxel probabilities.
template <typename S>
struct Model {
    EncoderConfig ecfg;
    DecoderConfig dcfg;
    ParamStore<S> params;
    SwinEncoder<S> encoder;
    VoxelDecoder<S> decoder;

    static Model build(const EncoderConfig& ec, const DecoderConfig& dc, uint64_t seed) {
        Model m;
        m.ecfg = ec;
        m.dcfg = dc;
        m.encoder = SwinEncoder<S>::build(ec, m.params, seed);
        m.decoder = VoxelDecoder<S>::build(dc, ec.out_features(), m.params, seed);
        return m;
    }

    // (b,3,S,S) -> (b, V, V, V) occupancy probabilities.
    TensorT<S> forward(Tape<S>* tp, const TensorT<S>& images, bool training,
                       Rng* dp_rng = nullptr) const {
        Model* self = const_cast<Model*>(this);
        TensorT<S> fm = encoder.forward(tp, self->params, images, training ? dp_rng : nullptr);
        return decoder.forward(tp, self->params, fm, training);
    }

    // Mean dice loss of a batch against binary targets (b, V^3).
    TensorT<S> loss(Tape<S>* tp, const TensorT<S>& images, const TensorT<S>& targets,
                    bool training, Rng* dp_rng = nullptr) const {
        TensorT<S> probs = forward(tp, images, training, dp_rng);
        int64_t b = probs.shape[0];
        TensorT<S> flat = reshape(tp, probs, {b, probs.numel() / b});
        return dice_loss(tp, flat, targets);
    }
};

}  // namespace r3ds
