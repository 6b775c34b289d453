#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include "r3ds/tape.hpp"
#include "r3ds/tensor.hpp"

// Differentiable op suite on dense tensors. Every op computes its forward
// value eagerly and, when a tape is supplied and an input lives on it,
// records a backward rule. Passing tape = nullptr gives the pure function.
// All outputs are checked for NaN/Inf; non-finite values are a hard error.

namespace r3ds {
namespace detail {

// Strides of `shape` when iterated with the index space of `out`
// (right-aligned; broadcast dimensions get stride 0).
inline Shape bcast_strides(const Shape& shape, const Shape& out) {
    Shape full = row_major_strides(shape);
    Shape st(out.size(), 0);
    size_t off = out.size() - shape.size();
    for (size_t i = 0; i < shape.size(); ++i)
        if (shape[i] != 1) st[off + i] = full[i];
    return st;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace detail

// Sum `g` down to `target` (right-aligned), the adjoint of broadcasting.
template <typename S>
TensorT<S> reduce_to(const TensorT<S>& g, const Shape& target) {
    if (g.shape == target) return g;
    if (detail::is_suffix(target, g.shape)) {
        TensorT<S> out = TensorT<S>::zeros(target);
        int64_t inner = out.numel(), outer = g.numel() / inner;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) out.data[size_t(i)] += g.data[size_t(o * inner + i)];
        return out;
    }
    TensorT<S> out = TensorT<S>::zeros(target);
    Shape st = detail::bcast_strides(target, g.shape);
    Shape idx(g.shape.size(), 0);
    int64_t ot = 0;
    int nd = int(g.shape.size());
    for (int64_t i = 0; i < g.numel(); ++i) {
        out.data[size_t(ot)] += g.data[size_t(i)];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[size_t(d)] < g.shape[size_t(d)]) {
                ot += st[size_t(d)];
                break;
            }
            idx[size_t(d)] = 0;
            ot -= st[size_t(d)] * (g.shape[size_t(d)] - 1);
        }
    }
    return out;
}

namespace detail {

template <typename S, class F>
TensorT<S> ew_binary(const TensorT<S>& a, const TensorT<S>& b, const char* who, F&& f) {
    if (a.shape == b.shape) {
        TensorT<S> out = a;
        out.node = -1;
        out.tape_serial = 0;
        out.requires_grad = false;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
        return out;
    }
    if (is_suffix(b.shape, a.shape)) {  // common case: bias-style broadcast
        TensorT<S> out = TensorT<S>::zeros(a.shape);
        int64_t inner = b.numel(), outer = a.numel() / inner;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i)
                out.data[size_t(o * inner + i)] = f(a.data[size_t(o * inner + i)], b.data[size_t(i)]);
        return out;
    }
    Shape os = broadcast_shape(a.shape, b.shape, who);
    TensorT<S> out = TensorT<S>::zeros(os);
    Shape sa = bcast_strides(a.shape, os), sb = bcast_strides(b.shape, os);
    Shape idx(os.size(), 0);
    int64_t oa = 0, ob = 0;
    int nd = int(os.size());
    for (int64_t i = 0; i < out.numel(); ++i) {
        out.data[size_t(i)] = f(a.data[size_t(oa)], b.data[size_t(ob)]);
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[size_t(d)] < os[size_t(d)]) {
                oa += sa[size_t(d)];
                ob += sb[size_t(d)];
                break;
            }
            idx[size_t(d)] = 0;
            oa -= sa[size_t(d)] * (os[size_t(d)] - 1);
            ob -= sb[size_t(d)] * (os[size_t(d)] - 1);
        }
    }
    return out;
}

}  // namespace detail

template <typename S>
TensorT<S> add(Tape<S>* tp, const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> out = detail::ew_binary(a, b, "add", [](S x, S y) { return x + y; });
    ensure_finite(out, "add");
    if (!tp) return out;
    int pa = tp->node_of(a), pb = tp->node_of(b);
    if (pa < 0 && pb < 0) return out;
    Shape ash = a.shape, bsh = b.shape;
    tp->record(out, {pa, pb}, [pa, pb, ash, bsh](Tape<S>& t, const TensorT<S>& g) {
        if (pa >= 0) t.accum(pa, reduce_to(g, ash));
        if (pb >= 0) t.accum(pb, reduce_to(g, bsh));
    });
    return out;
}

template <typename S>
TensorT<S> sub(Tape<S>* tp, const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> out = detail::ew_binary(a, b, "sub", [](S x, S y) { return x - y; });
    ensure_finite(out, "sub");
    if (!tp) return out;
    int pa = tp->node_of(a), pb = tp->node_of(b);
    if (pa < 0 && pb < 0) return out;
    Shape ash = a.shape, bsh = b.shape;
    tp->record(out, {pa, pb}, [pa, pb, ash, bsh](Tape<S>& t, const TensorT<S>& g) {
        if (pa >= 0) t.accum(pa, reduce_to(g, ash));
        if (pb >= 0) {
            TensorT<S> ng = g;
            for (S& v : ng.data) v = -v;
            t.accum(pb, reduce_to(ng, bsh));
        }
    });
    return out;
}

template <typename S>
TensorT<S> mul(Tape<S>* tp, const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> out = detail::ew_binary(a, b, "mul", [](S x, S y) { return x * y; });
    ensure_finite(out, "mul");
    if (!tp) return out;
    int pa = tp->node_of(a), pb = tp->node_of(b);
    if (pa < 0 && pb < 0) return out;
    TensorT<S> ac = a, bc = b;
    tp->record(out, {pa, pb}, [pa, pb, ac, bc](Tape<S>& t, const TensorT<S>& g) {
        if (pa >= 0)
            t.accum(pa, reduce_to(detail::ew_binary(g, bc, "mul.bwd", [](S x, S y) { return x * y; }),
                                  ac.shape));
        if (pb >= 0)
            t.accum(pb, reduce_to(detail::ew_binary(g, ac, "mul.bwd", [](S x, S y) { return x * y; }),
                                  bc.shape));
    });
    return out;
}

template <typename S>
TensorT<S> div(Tape<S>* tp, const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> out = detail::ew_binary(a, b, "div", [](S x, S y) { return x / y; });
    ensure_finite(out, "div");
    if (!tp) return out;
    int pa = tp->node_of(a), pb = tp->node_of(b);
    if (pa < 0 && pb < 0) return out;
    TensorT<S> ac = a, bc = b;
    tp->record(out, {pa, pb}, [pa, pb, ac, bc](Tape<S>& t, const TensorT<S>& g) {
        if (pa >= 0)
            t.accum(pa, reduce_to(detail::ew_binary(g, bc, "div.bwd", [](S x, S y) { return x / y; }),
                                  ac.shape));
        if (pb >= 0) {
            TensorT<S> q = detail::ew_binary(ac, bc, "div.bwd", [](S x, S y) { return -x / (y * y); });
            t.accum(pb, reduce_to(detail::ew_binary(g, q, "div.bwd", [](S x, S y) { return x * y; }),
                                  bc.shape));
        }
    });
    return out;
}

// y = k*x + m  (covers scaling and scalar shifts in one rule)
template <typename S>
TensorT<S> affine(Tape<S>* tp, const TensorT<S>& x, double k, double m = 0.0) {
    TensorT<S> out = x;
    out.node = -1;
    out.tape_serial = 0;
    out.requires_grad = false;
    for (S& v : out.data) v = S(k) * v + S(m);
    ensure_finite(out, "affine");
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, k](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> d = g;
        for (S& v : d.data) v *= S(k);
        t.accum(px, d);
    });
    return out;
}

template <typename S>
TensorT<S> scale(Tape<S>* tp, const TensorT<S>& x, double k) {
    return affine(tp, x, k, 0.0);
}

namespace detail {

template <typename S, class Fwd, class Bwd>
TensorT<S> ew_unary(Tape<S>* tp, const TensorT<S>& x, const char* who, Fwd&& f, Bwd&& dfdx) {
    TensorT<S> out = x;
    out.node = -1;
    out.tape_serial = 0;
    out.requires_grad = false;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(x.data[i]);
    ensure_finite(out, who);
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    TensorT<S> xc = x, yc = out;
    tp->record(out, {px}, [px, xc, yc, dfdx](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> d = g;
        for (size_t i = 0; i < d.data.size(); ++i) d.data[i] *= dfdx(xc.data[i], yc.data[i]);
        t.accum(px, d);
    });
    return out;
}

}  // namespace detail

template <typename S>
TensorT<S> relu(Tape<S>* tp, const TensorT<S>& x) {
    return detail::ew_unary(
        tp, x, "relu", [](S v) { return v > S(0) ? v : S(0); },
        [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
TensorT<S> sigmoid(Tape<S>* tp, const TensorT<S>& x) {
    auto f = [](S v) {
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        S e = std::exp(v);
        return e / (S(1) + e);
    };
    return detail::ew_unary(tp, x, "sigmoid", f, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
TensorT<S> gelu(Tape<S>* tp, const TensorT<S>& x) {
    constexpr double kInvSqrt2 = 0.7071067811865476;
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    auto f = [=](S v) { return S(0.5) * v * (S(1) + S(std::erf(double(v) * kInvSqrt2))); };
    auto d = [=](S v, S) {
        double cdf = 0.5 * (1.0 + std::erf(double(v) * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * double(v) * double(v));
        return S(cdf + double(v) * pdf);
    };
    return detail::ew_unary(tp, x, "gelu", f, d);
}

template <typename S>
TensorT<S> exp_op(Tape<S>* tp, const TensorT<S>& x) {
    return detail::ew_unary(
        tp, x, "exp", [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

// y = exp(min(x, hi)); gradient is zero where the clamp is active.
template <typename S>
TensorT<S> exp_clamp(Tape<S>* tp, const TensorT<S>& x, double hi) {
    return detail::ew_unary(
        tp, x, "exp_clamp", [=](S v) { return std::exp(std::min(v, S(hi))); },
        [=](S v, S y) { return v < S(hi) ? y : S(0); });
}

// --- structural ops ---------------------------------------------------------

template <typename S>
TensorT<S> reshape(Tape<S>* tp, const TensorT<S>& x, Shape sh) {
    TensorT<S> out = x.reshaped(std::move(sh));
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    Shape xs = x.shape;
    tp->record(out, {px},
               [px, xs](Tape<S>& t, const TensorT<S>& g) { t.accum(px, g.reshaped(xs)); });
    return out;
}

namespace detail {

template <typename S>
TensorT<S> permute_pure(const TensorT<S>& x, const std::vector<int>& axes) {
    int nd = x.ndim();
    if (int(axes.size()) != nd) throw ShapeError("permute: axes rank mismatch");
    Shape os(size_t(nd), 0);
    for (int i = 0; i < nd; ++i) os[size_t(i)] = x.shape[size_t(axes[size_t(i)])];
    TensorT<S> out = TensorT<S>::zeros(os);
    Shape xstr = row_major_strides(x.shape);
    Shape pstr(size_t(nd), 0);
    for (int i = 0; i < nd; ++i) pstr[size_t(i)] = xstr[size_t(axes[size_t(i)])];
    Shape idx(size_t(nd), 0);
    int64_t ox = 0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        out.data[size_t(i)] = x.data[size_t(ox)];
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[size_t(d)] < os[size_t(d)]) {
                ox += pstr[size_t(d)];
                break;
            }
            idx[size_t(d)] = 0;
            ox -= pstr[size_t(d)] * (os[size_t(d)] - 1);
        }
    }
    return out;
}

}  // namespace detail

template <typename S>
TensorT<S> permute(Tape<S>* tp, const TensorT<S>& x, const std::vector<int>& axes) {
    TensorT<S> out = detail::permute_pure(x, axes);
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[size_t(axes[i])] = int(i);
    tp->record(out, {px}, [px, inv](Tape<S>& t, const TensorT<S>& g) {
        t.accum(px, detail::permute_pure(g, inv));
    });
    return out;
}

template <typename S>
TensorT<S> transpose_last2(Tape<S>* tp, const TensorT<S>& x) {
    std::vector<int> axes(size_t(x.ndim()));
    for (int i = 0; i < x.ndim(); ++i) axes[size_t(i)] = i;
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(tp, x, axes);
}

// Rearrange each leading-dim slice of x by a fixed index map:
//   out[s, i] = x[s, idx[i]]   (flattened per slice)
// The map may repeat or drop entries; the backward rule scatter-adds, which is
// the exact adjoint either way. Window partition/reverse, cyclic shifts and
// patch-merging gathers are all bijective instances of this.
template <typename S>
TensorT<S> gather_per_slice(Tape<S>* tp, const TensorT<S>& x, const std::vector<int64_t>& idx,
                            Shape out_shape) {
    int64_t slices = x.shape[0];
    int64_t in_per = x.numel() / slices;
    int64_t out_per = int64_t(idx.size());
    if (shape_numel(out_shape) != slices * out_per)
        throw ShapeError("gather_per_slice: out shape " + shape_str(out_shape) +
                         " inconsistent with " + std::to_string(slices * out_per) + " elements");
    TensorT<S> out = TensorT<S>::zeros(std::move(out_shape));
    for (int64_t s = 0; s < slices; ++s) {
        const S* src = x.data.data() + s * in_per;
        S* dst = out.data.data() + s * out_per;
        for (int64_t i = 0; i < out_per; ++i) dst[i] = src[idx[size_t(i)]];
    }
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    Shape xs = x.shape;
    tp->record(out, {px},
               [px, xs, ix = idx, slices, in_per, out_per](Tape<S>& t, const TensorT<S>& g) {
                   TensorT<S> gx = TensorT<S>::zeros(xs);
                   for (int64_t s = 0; s < slices; ++s) {
                       S* dst = gx.data.data() + s * in_per;
                       const S* src = g.data.data() + s * out_per;
                       for (int64_t i = 0; i < out_per; ++i) dst[ix[size_t(i)]] += src[i];
                   }
                   t.accum(px, gx);
               });
    return out;
}

// out[l, :] = table[idx[l], :]  -- relative-position-bias lookups.
template <typename S>
TensorT<S> gather_rows(Tape<S>* tp, const TensorT<S>& table, const std::vector<int64_t>& idx) {
    if (table.ndim() != 2) throw ShapeError("gather_rows: table must be 2-d");
    int64_t cols = table.shape[1];
    TensorT<S> out = TensorT<S>::zeros({int64_t(idx.size()), cols});
    for (size_t l = 0; l < idx.size(); ++l)
        std::copy_n(table.data.data() + idx[l] * cols, cols, out.data.data() + int64_t(l) * cols);
    if (!tp) return out;
    int pt = tp->node_of(table);
    if (pt < 0) return out;
    Shape ts = table.shape;
    tp->record(out, {pt}, [pt, ts, ix = idx, cols](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> gt = TensorT<S>::zeros(ts);
        for (size_t l = 0; l < ix.size(); ++l)
            for (int64_t c = 0; c < cols; ++c)
                gt.data[size_t(ix[l] * cols + c)] += g.data[size_t(int64_t(l) * cols + c)];
        t.accum(pt, gt);
    });
    return out;
}

// --- reductions -------------------------------------------------------------

template <typename S>
TensorT<S> row_sum(Tape<S>* tp, const TensorT<S>& x) {
    int64_t inner = x.shape.back();
    int64_t outer = x.numel() / inner;
    Shape os(x.shape.begin(), x.shape.end() - 1);
    if (os.empty()) os = {1};
    TensorT<S> out = TensorT<S>::zeros(os);
    for (int64_t o = 0; o < outer; ++o) {
        S acc = S(0);
        for (int64_t i = 0; i < inner; ++i) acc += x.data[size_t(o * inner + i)];
        out.data[size_t(o)] = acc;
    }
    ensure_finite(out, "row_sum");
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    Shape xs = x.shape;
    tp->record(out, {px}, [px, xs, inner, outer](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> gx = TensorT<S>::zeros(xs);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) gx.data[size_t(o * inner + i)] = g.data[size_t(o)];
        t.accum(px, gx);
    });
    return out;
}

template <typename S>
TensorT<S> sum_all(Tape<S>* tp, const TensorT<S>& x) {
    S acc = S(0);
    for (const S& v : x.data) acc += v;
    TensorT<S> out = TensorT<S>::scalar(acc);
    ensure_finite(out, "sum_all");
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    Shape xs = x.shape;
    tp->record(out, {px}, [px, xs](Tape<S>& t, const TensorT<S>& g) {
        t.accum(px, TensorT<S>::full(xs, g.data[0]));
    });
    return out;
}

template <typename S>
TensorT<S> mean_all(Tape<S>* tp, const TensorT<S>& x) {
    return scale(tp, sum_all(tp, x), 1.0 / double(x.numel()));
}

// --- matmul -----------------------------------------------------------------

namespace detail {

template <typename S>
void matmul_batch(const S* a, const S* b, S* out, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        S* orow = out + i * n;
        std::fill_n(orow, n, S(0));
        const S* arow = a + i * k;
        for (int64_t t = 0; t < k; ++t) {
            S av = arow[t];
            const S* brow = b + t * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

template <typename S>
TensorT<S> matmul_pure(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape) +
                         " and " + shape_str(b.shape));
    int64_t m = a.shape[size_t(a.ndim() - 2)], k = a.shape[size_t(a.ndim() - 1)];
    int64_t k2 = b.shape[size_t(b.ndim() - 2)], n = b.shape[size_t(b.ndim() - 1)];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    Shape abatch(a.shape.begin(), a.shape.end() - 2);
    Shape bbatch(b.shape.begin(), b.shape.end() - 2);
    Shape batch = broadcast_shape(abatch, bbatch, "matmul");
    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    TensorT<S> out = TensorT<S>::zeros(os);

    int64_t nb = shape_numel(batch);
    Shape sa = bcast_strides(abatch, batch), sb = bcast_strides(bbatch, batch);
    // convert per-dim index strides to element offsets of whole matrices
    Shape idx(batch.size(), 0);
    int64_t oa = 0, ob = 0;
    int nd = int(batch.size());
    for (int64_t bi = 0; bi < nb; ++bi) {
        matmul_batch(a.data.data() + oa * m * k, b.data.data() + ob * k * n,
                     out.data.data() + bi * m * n, m, k, n);
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[size_t(d)] < batch[size_t(d)]) {
                oa += sa[size_t(d)];
                ob += sb[size_t(d)];
                break;
            }
            idx[size_t(d)] = 0;
            oa -= sa[size_t(d)] * (batch[size_t(d)] - 1);
            ob -= sb[size_t(d)] * (batch[size_t(d)] - 1);
        }
    }
    return out;
}

}  // namespace detail

template <typename S>
TensorT<S> matmul(Tape<S>* tp, const TensorT<S>& a, const TensorT<S>& b) {
    TensorT<S> out = detail::matmul_pure(a, b);
    ensure_finite(out, "matmul");
    if (!tp) return out;
    int pa = tp->node_of(a), pb = tp->node_of(b);
    if (pa < 0 && pb < 0) return out;
    TensorT<S> ac = a, bc = b;
    tp->record(out, {pa, pb}, [pa, pb, ac, bc](Tape<S>& t, const TensorT<S>& g) {
        if (pa >= 0) {
            TensorT<S> da = detail::matmul_pure(g, detail::permute_pure(bc, [&] {
                std::vector<int> ax(size_t(bc.ndim()));
                for (int i = 0; i < bc.ndim(); ++i) ax[size_t(i)] = i;
                std::swap(ax[ax.size() - 1], ax[ax.size() - 2]);
                return ax;
            }()));
            t.accum(pa, reduce_to(da, ac.shape));
        }
        if (pb >= 0) {
            TensorT<S> db = detail::matmul_pure(detail::permute_pure(ac, [&] {
                std::vector<int> ax(size_t(ac.ndim()));
                for (int i = 0; i < ac.ndim(); ++i) ax[size_t(i)] = i;
                std::swap(ax[ax.size() - 1], ax[ax.size() - 2]);
                return ax;
            }()), g);
            t.accum(pb, reduce_to(db, bc.shape));
        }
    });
    return out;
}

// --- row-wise normalizations --------------------------------------------------

template <typename S>
TensorT<S> softmax_lastdim(Tape<S>* tp, const TensorT<S>& x) {
    int64_t inner = x.shape.back();
    int64_t outer = x.numel() / inner;
    if (inner < 1) throw ShapeError("softmax: empty last dimension");
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    for (int64_t o = 0; o < outer; ++o) {
        const S* xr = x.data.data() + o * inner;
        S* yr = out.data.data() + o * inner;
        S mx = xr[0];
        for (int64_t i = 1; i < inner; ++i) mx = std::max(mx, xr[i]);
        S sum = S(0);
        for (int64_t i = 0; i < inner; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            sum += yr[i];
        }
        for (int64_t i = 0; i < inner; ++i) yr[i] /= sum;
    }
    ensure_finite(out, "softmax");
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    TensorT<S> yc = out;
    tp->record(out, {px}, [px, yc, inner, outer](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> gx = TensorT<S>::zeros(yc.shape);
        for (int64_t o = 0; o < outer; ++o) {
            const S* yr = yc.data.data() + o * inner;
            const S* gr = g.data.data() + o * inner;
            S dot = S(0);
            for (int64_t i = 0; i < inner; ++i) dot += gr[i] * yr[i];
            S* dr = gx.data.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dr[i] = yr[i] * (gr[i] - dot);
        }
        t.accum(px, gx);
    });
    return out;
}

// Per-row normalization over the last (channel) dimension, then affine.
template <typename S>
TensorT<S> layer_norm(Tape<S>* tp, const TensorT<S>& x, const TensorT<S>& gamma,
                      const TensorT<S>& beta, double eps = 1e-5) {
    int64_t c = x.shape.back();
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape) + "/" +
                         shape_str(beta.shape) + " must match channels " + std::to_string(c));
    int64_t rows = x.numel() / c;
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    std::vector<S> rstd(size_t(rows), S(0)), mean(size_t(rows), S(0));
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data.data() + r * c;
        S mu = S(0);
        for (int64_t i = 0; i < c; ++i) mu += xr[i];
        mu /= S(c);
        S var = S(0);
        for (int64_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= S(c);
        S rs = S(1) / std::sqrt(var + S(eps));
        mean[size_t(r)] = mu;
        rstd[size_t(r)] = rs;
        S* yr = out.data.data() + r * c;
        for (int64_t i = 0; i < c; ++i)
            yr[i] = (xr[i] - mu) * rs * gamma.data[size_t(i)] + beta.data[size_t(i)];
    }
    ensure_finite(out, "layer_norm");
    if (!tp) return out;
    int px = tp->node_of(x), pg = tp->node_of(gamma), pb = tp->node_of(beta);
    if (px < 0 && pg < 0 && pb < 0) return out;
    TensorT<S> xc = x, gc = gamma;
    tp->record(out, {px, pg, pb},
               [px, pg, pb, xc, gc, mean, rstd, rows, c](Tape<S>& t, const TensorT<S>& g) {
                   if (pg >= 0 || pb >= 0) {
                       TensorT<S> dgamma = TensorT<S>::zeros(gc.shape);
                       TensorT<S> dbeta = TensorT<S>::zeros(gc.shape);
                       for (int64_t r = 0; r < rows; ++r) {
                           const S* xr = xc.data.data() + r * c;
                           const S* gr = g.data.data() + r * c;
                           for (int64_t i = 0; i < c; ++i) {
                               S xhat = (xr[i] - mean[size_t(r)]) * rstd[size_t(r)];
                               dgamma.data[size_t(i)] += gr[i] * xhat;
                               dbeta.data[size_t(i)] += gr[i];
                           }
                       }
                       if (pg >= 0) t.accum(pg, dgamma);
                       if (pb >= 0) t.accum(pb, dbeta);
                   }
                   if (px >= 0) {
                       TensorT<S> gx = TensorT<S>::zeros(xc.shape);
                       for (int64_t r = 0; r < rows; ++r) {
                           const S* xr = xc.data.data() + r * c;
                           const S* gr = g.data.data() + r * c;
                           S* dr = gx.data.data() + r * c;
                           S m1 = S(0), m2 = S(0);
                           for (int64_t i = 0; i < c; ++i) {
                               S xhat = (xr[i] - mean[size_t(r)]) * rstd[size_t(r)];
                               S dh = gr[i] * gc.data[size_t(i)];
                               m1 += dh;
                               m2 += dh * xhat;
                           }
                           m1 /= S(c);
                           m2 /= S(c);
                           for (int64_t i = 0; i < c; ++i) {
                               S xhat = (xr[i] - mean[size_t(r)]) * rstd[size_t(r)];
                               S dh = gr[i] * gc.data[size_t(i)];
                               dr[i] = (dh - m1 - xhat * m2) * rstd[size_t(r)];
                           }
                       }
                       t.accum(px, gx);
                   }
               });
    return out;
}

// y = x / max(||x||_2, eps) over the last dimension (cosine attention).
template <typename S>
TensorT<S> l2_normalize_lastdim(Tape<S>* tp, const TensorT<S>& x, double eps = 1e-12) {
    int64_t c = x.shape.back();
    int64_t rows = x.numel() / c;
    TensorT<S> out = TensorT<S>::zeros(x.shape);
    std::vector<S> norms(size_t(rows), S(0));
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data.data() + r * c;
        S sq = S(0);
        for (int64_t i = 0; i < c; ++i) sq += xr[i] * xr[i];
        S n = std::max(std::sqrt(sq), S(eps));
        norms[size_t(r)] = n;
        S* yr = out.data.data() + r * c;
        for (int64_t i = 0; i < c; ++i) yr[i] = xr[i] / n;
    }
    ensure_finite(out, "l2_normalize");
    if (!tp) return out;
    int px = tp->node_of(x);
    if (px < 0) return out;
    TensorT<S> xc = x;
    tp->record(out, {px}, [px, xc, norms, rows, c, eps](Tape<S>& t, const TensorT<S>& g) {
        TensorT<S> gx = TensorT<S>::zeros(xc.shape);
        for (int64_t r = 0; r < rows; ++r) {
            const S* xr = xc.data.data() + r * c;
            const S* gr = g.data.data() + r * c;
            S* dr = gx.data.data() + r * c;
            S n = norms[size_t(r)];
            bool clamped = n <= S(eps) * S(1 + 1e-9);
            S dot = S(0);
            for (int64_t i = 0; i < c; ++i) dot += gr[i] * xr[i];
            for (int64_t i = 0; i < c; ++i)
                dr[i] = clamped ? gr[i] / n : gr[i] / n - xr[i] * dot / (n * n * n);
        }
        t.accum(px, gx);
    });
    return out;
}

// y = x @ w + b with w of shape (in, out).
template <typename S>
TensorT<S> linear(Tape<S>* tp, const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    return add(tp, matmul(tp, x, w), b);
}

}  // namespace r3ds
