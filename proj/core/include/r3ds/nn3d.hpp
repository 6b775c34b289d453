#pragma once
#include <cmath>

#include "r3ds/ops.hpp"

// Volumetric primitives for the voxel decoder: transposed 3-d convolution
// fixed at kernel 4 / stride 2 / padding 1 (the doubling ladder is the only
// consumer), a 1x1x1 projection conv, and BatchNorm3d.

namespace r3ds {

// x (b, c_in, d, h, w) * w (c_in, c_out, 4, 4, 4) + bias (c_out)
//   -> (b, c_out, 2d, 2h, 2w)
template <typename S>
TensorT<S> conv_transpose3d(Tape<S>* tp, const TensorT<S>& x, const TensorT<S>& w,
                            const TensorT<S>& bias) {
    if (x.ndim() != 5) throw ShapeError("conv_transpose3d: input must be 5-d, got " + shape_str(x.shape));
    if (w.ndim() != 5 || w.shape[2] != 4 || w.shape[3] != 4 || w.shape[4] != 4)
        throw ShapeError("conv_transpose3d: weight must be (c_in,c_out,4,4,4), got " + shape_str(w.shape));
    if (x.shape[1] != w.shape[0])
        throw ShapeError("conv_transpose3d: channel mismatch, input " + shape_str(x.shape) +
                         " vs weight " + shape_str(w.shape));
    const int64_t B = x.shape[0], CI = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4];
    const int64_t CO = w.shape[1];
    if (bias.numel() != CO)
        throw ShapeError("conv_transpose3d: bias " + shape_str(bias.shape) + " vs c_out " +
                         std::to_string(CO));
    const int64_t D2 = 2 * D, H2 = 2 * H, W2 = 2 * W;
    TensorT<S> out = TensorT<S>::zeros({B, CO, D2, H2, W2});

    const int64_t xplane = D * H * W, oplane = D2 * H2 * W2;
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t co = 0; co < CO; ++co)
            std::fill_n(out.data.data() + (n * CO + co) * oplane, oplane, bias.data[size_t(co)]);
        for (int64_t ci = 0; ci < CI; ++ci) {
            const S* xp = x.data.data() + (n * CI + ci) * xplane;
            for (int64_t co = 0; co < CO; ++co) {
                S* op = out.data.data() + (n * CO + co) * oplane;
                const S* wb = w.data.data() + (ci * CO + co) * 64;
                for (int64_t id = 0; id < D; ++id)
                    for (int64_t ih = 0; ih < H; ++ih)
                        for (int64_t iw = 0; iw < W; ++iw) {
                            S xv = xp[(id * H + ih) * W + iw];
                            // out voxel = 2*in + k - 1, k in [0,4)
                            for (int64_t a = 0; a < 4; ++a) {
                                int64_t od = 2 * id + a - 1;
                                if (od < 0 || od >= D2) continue;
                                for (int64_t b2 = 0; b2 < 4; ++b2) {
                                    int64_t oh = 2 * ih + b2 - 1;
                                    if (oh < 0 || oh >= H2) continue;
                                    S* orow = op + (od * H2 + oh) * W2;
                                    const S* wrow = wb + (a * 4 + b2) * 4;
                                    for (int64_t c2 = 0; c2 < 4; ++c2) {
                                        int64_t ow = 2 * iw + c2 - 1;
                                        if (ow < 0 || ow >= W2) continue;
                                        orow[ow] += xv * wrow[c2];
                                    }
                                }
                            }
                        }
            }
        }
    }
    ensure_finite(out, "conv_transpose3d");
    if (!tp) return out;
    int px = tp->node_of(x), pw = tp->node_of(w), pb = tp->node_of(bias);
    if (px < 0 && pw < 0 && pb < 0) return out;
    TensorT<S> xc = x, wc = w;
    tp->record(out, {px, pw, pb}, [=](Tape<S>& t, const TensorT<S>& g) {
        if (px >= 0) {
            TensorT<S> gx = TensorT<S>::zeros(xc.shape);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t ci = 0; ci < CI; ++ci) {
                    S* gxp = gx.data.data() + (n * CI + ci) * xplane;
                    for (int64_t co = 0; co < CO; ++co) {
                        const S* gp = g.data.data() + (n * CO + co) * oplane;
                        const S* wb = wc.data.data() + (ci * CO + co) * 64;
                        for (int64_t id = 0; id < D; ++id)
                            for (int64_t ih = 0; ih < H; ++ih)
                                for (int64_t iw = 0; iw < W; ++iw) {
                                    S acc = S(0);
                                    for (int64_t a = 0; a < 4; ++a) {
                                        int64_t od = 2 * id + a - 1;
                                        if (od < 0 || od >= D2) continue;
                                        for (int64_t b2 = 0; b2 < 4; ++b2) {
                                            int64_t oh = 2 * ih + b2 - 1;
                                            if (oh < 0 || oh >= H2) continue;
                                            const S* grow = gp + (od * H2 + oh) * W2;
                                            const S* wrow = wb + (a * 4 + b2) * 4;
                                            for (int64_t c2 = 0; c2 < 4; ++c2) {
                                                int64_t ow = 2 * iw + c2 - 1;
                                                if (ow < 0 || ow >= W2) continue;
                                                acc += grow[ow] * wrow[c2];
                                            }
                                        }
                                    }
                                    gxp[(id * H + ih) * W + iw] += acc;
                                }
                    }
                }
            t.accum(px, gx);
        }
        if (pw >= 0) {
            TensorT<S> gw = TensorT<S>::zeros(wc.shape);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t ci = 0; ci < CI; ++ci) {
                    const S* xp = xc.data.data() + (n * CI + ci) * xplane;
                    for (int64_t co = 0; co < CO; ++co) {
                        const S* gp = g.data.data() + (n * CO + co) * oplane;
                        S* gwb = gw.data.data() + (ci * CO + co) * 64;
                        for (int64_t id = 0; id < D; ++id)
                            for (int64_t ih = 0; ih < H; ++ih)
                                for (int64_t iw = 0; iw < W; ++iw) {
                                    S xv = xp[(id * H + ih) * W + iw];
                                    for (int64_t a = 0; a < 4; ++a) {
                                        int64_t od = 2 * id + a - 1;
                                        if (od < 0 || od >= D2) continue;
                                        for (int64_t b2 = 0; b2 < 4; ++b2) {
                                            int64_t oh = 2 * ih + b2 - 1;
                                            if (oh < 0 || oh >= H2) continue;
                                            const S* grow = gp + (od * H2 + oh) * W2;
                                            S* gwrow = gwb + (a * 4 + b2) * 4;
                                            for (int64_t c2 = 0; c2 < 4; ++c2) {
                                                int64_t ow = 2 * iw + c2 - 1;
                                                if (ow < 0 || ow >= W2) continue;
                                                gwrow[c2] += xv * grow[ow];
                                            }
                                        }
                                    }
                                }
                    }
                }
            t.accum(pw, gw);
        }
        if (pb >= 0) {
            TensorT<S> gb = TensorT<S>::zeros({CO});
            for (int64_t n = 0; n < B; ++n)
                for (int64_t co = 0; co < CO; ++co) {
                    const S* gp = g.data.data() + (n * CO + co) * oplane;
                    S acc = S(0);
                    for (int64_t i = 0; i < oplane; ++i) acc += gp[i];
                    gb.data[size_t(co)] += acc;
                }
            t.accum(pb, gb);
        }
    });
    return out;
}

// Pointwise (1x1x1) conv: x (b,c_in,d,h,w) * w (c_in,c_out) + bias (c_out).
template <typename S>
TensorT<S> conv3d_1x1(Tape<S>* tp, const TensorT<S>& x, const TensorT<S>& w,
                      const TensorT<S>& bias) {
    if (x.ndim() != 5 || w.ndim() != 2 || x.shape[1] != w.shape[0])
        throw ShapeError("conv3d_1x1: input " + shape_str(x.shape) + " vs weight " +
                         shape_str(w.shape));
    const int64_t B = x.shape[0], CI = x.shape[1], CO = w.shape[1];
    const int64_t V = x.shape[2] * x.shape[3] * x.shape[4];
    TensorT<S> out = TensorT<S>::zeros({B, CO, x.shape[2], x.shape[3], x.shape[4]});
    for (int64_t n = 0; n < B; ++n)
        for (int64_t co = 0; co < CO; ++co) {
            S* op = out.data.data() + (n * CO + co) * V;
            std::fill_n(op, V, bias.data[size_t(co)]);
            for (int64_t ci = 0; ci < CI; ++ci) {
                const S* xp = x.data.data() + (n * CI + ci) * V;
                S wv = w.data[size_t(ci * CO + co)];
                for (int64_t i = 0; i < V; ++i) op[i] += wv * xp[i];
            }
        }
    ensure_finite(out, "conv3d_1x1");
    if (!tp) return out;
    int px = tp->node_of(x), pw = tp->node_of(w), pb = tp->node_of(bias);
    if (px < 0 && pw < 0 && pb < 0) return out;
    TensorT<S> xc = x, wc = w;
    tp->record(out, {px, pw, pb}, [=](Tape<S>& t, const TensorT<S>& g) {
        if (px >= 0) {
            TensorT<S> gx = TensorT<S>::zeros(xc.shape);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t ci = 0; ci < CI; ++ci) {
                    S* gxp = gx.data.data() + (n * CI + ci) * V;
                    for (int64_t co = 0; co < CO; ++co) {
                        const S* gp = g.data.data() + (n * CO + co) * V;
                        S wv = wc.data[size_t(ci * CO + co)];
                        for (int64_t i = 0; i < V; ++i) gxp[i] += wv * gp[i];
                    }
                }
            t.accum(px, gx);
        }
        if (pw >= 0) {
            TensorT<S> gw = TensorT<S>::zeros(wc.shape);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t ci = 0; ci < CI; ++ci) {
                    const S* xp = xc.data.data() + (n * CI + ci) * V;
                    for (int64_t co = 0; co < CO; ++co) {
                        const S* gp = g.data.data() + (n * CO + co) * V;
                        S acc = S(0);
                        for (int64_t i = 0; i < V; ++i) acc += xp[i] * gp[i];
                        gw.data[size_t(ci * CO + co)] += acc;
                    }
                }
            t.accum(pw, gw);
        }
        if (pb >= 0) {
            TensorT<S> gb = TensorT<S>::zeros({CO});
            for (int64_t n = 0; n < B; ++n)
                for (int64_t co = 0; co < CO; ++co) {
                    const S* gp = g.data.data() + (n * CO + co) * V;
                    S acc = S(0);
                    for (int64_t i = 0; i < V; ++i) acc += gp[i];
                    gb.data[size_t(co)] += acc;
                }
            t.accum(pb, gb);
        }
    });
    return out;
}

// BatchNorm over (b, d, h, w) per channel. Train mode normalizes with batch
// statistics (biased variance) and updates the running stats with the
// unbiased variance; eval mode normalizes with the running stats. The running
// stats are buffers owned by the caller (checkpointed, never differentiated).
template <typename S>
TensorT<S> batch_norm3d(Tape<S>* tp, const TensorT<S>& x, const TensorT<S>& gamma,
                        const TensorT<S>& beta, TensorT<S>& running_mean, TensorT<S>& running_var,
                        bool training, double momentum = 0.1, double eps = 1e-5) {
    if (x.ndim() != 5) throw ShapeError("batch_norm3d: input must be 5-d, got " + shape_str(x.shape));
    const int64_t B = x.shape[0], C = x.shape[1];
    const int64_t V = x.shape[2] * x.shape[3] * x.shape[4];
    const int64_t N = B * V;
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C)
        throw ShapeError("batch_norm3d: affine/running stats must have " + std::to_string(C) +
                         " channels");
    if (training && N < 2)
        throw ShapeError("batch_norm3d: degenerate batch, need b*d*h*w >= 2 in train mode, got " +
                         std::to_string(N));

    std::vector<S> mu(size_t(C), S(0)), rstd(size_t(C), S(0));
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int64_t n = 0; n < B; ++n) {
                const S* xp = x.data.data() + (n * C + c) * V;
                for (int64_t i = 0; i < V; ++i) {
                    sum += double(xp[i]);
                    sq += double(xp[i]) * double(xp[i]);
                }
            }
            double m = sum / double(N);
            double var = sq / double(N) - m * m;
            if (var < 0) var = 0;
            mu[size_t(c)] = S(m);
            rstd[size_t(c)] = S(1.0 / std::sqrt(var + eps));
            double unbiased = var * double(N) / double(N - 1);
            running_mean.data[size_t(c)] =
                S((1.0 - momentum) * double(running_mean.data[size_t(c)]) + momentum * m);
            running_var.data[size_t(c)] =
                S((1.0 - momentum) * double(running_var.data[size_t(c)]) + momentum * unbiased);
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mu[size_t(c)] = running_mean.data[size_t(c)];
            rstd[size_t(c)] = S(1.0 / std::sqrt(double(running_var.data[size_t(c)]) + eps));
        }
    }

    TensorT<S> out = TensorT<S>::zeros(x.shape);
    for (int64_t n = 0; n < B; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const S* xp = x.data.data() + (n * C + c) * V;
            S* op = out.data.data() + (n * C + c) * V;
            S g = gamma.data[size_t(c)], b = beta.data[size_t(c)];
            S m = mu[size_t(c)], r = rstd[size_t(c)];
            for (int64_t i = 0; i < V; ++i) op[i] = (xp[i] - m) * r * g + b;
        }
    ensure_finite(out, "batch_norm3d");
    if (!tp) return out;
    int px = tp->node_of(x), pg = tp->node_of(gamma), pb = tp->node_of(beta);
    if (px < 0 && pg < 0 && pb < 0) return out;
    TensorT<S> xc = x, gc = gamma;
    tp->record(out, {px, pg, pb}, [=](Tape<S>& t, const TensorT<S>& g) {
        std::vector<S> dgamma(size_t(C), S(0)), dbeta(size_t(C), S(0));
        std::vector<S> sum_dh(size_t(C), S(0)), sum_dh_xhat(size_t(C), S(0));
        for (int64_t n = 0; n < B; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const S* xp = xc.data.data() + (n * C + c) * V;
                const S* gp = g.data.data() + (n * C + c) * V;
                S m = mu[size_t(c)], r = rstd[size_t(c)], ga = gc.data[size_t(c)];
                for (int64_t i = 0; i < V; ++i) {
                    S xhat = (xp[i] - m) * r;
                    dgamma[size_t(c)] += gp[i] * xhat;
                    dbeta[size_t(c)] += gp[i];
                    sum_dh[size_t(c)] += gp[i] * ga;
                    sum_dh_xhat[size_t(c)] += gp[i] * ga * xhat;
                }
            }
        if (pg >= 0) {
            TensorT<S> d = TensorT<S>::zeros({C});
            d.data.assign(dgamma.begin(), dgamma.end());
            t.accum(pg, d);
        }
        if (pb >= 0) {
            TensorT<S> d = TensorT<S>::zeros({C});
            d.data.assign(dbeta.begin(), dbeta.end());
            t.accum(pb, d);
        }
        if (px >= 0) {
            TensorT<S> gx = TensorT<S>::zeros(xc.shape);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const S* xp = xc.data.data() + (n * C + c) * V;
                    const S* gp = g.data.data() + (n * C + c) * V;
                    S* dp = gx.data.data() + (n * C + c) * V;
                    S m = mu[size_t(c)], r = rstd[size_t(c)], ga = gc.data[size_t(c)];
                    if (training) {
                        S m1 = sum_dh[size_t(c)] / S(N), m2 = sum_dh_xhat[size_t(c)] / S(N);
                        for (int64_t i = 0; i < V; ++i) {
                            S xhat = (xp[i] - m) * r;
                            dp[i] = (gp[i] * ga - m1 - xhat * m2) * r;
                        }
                    } else {
                        for (int64_t i = 0; i < V; ++i) dp[i] = gp[i] * ga * r;
                    }
                }
            t.accum(px, gx);
        }
    });
    return out;
}

}  // namespace r3ds
