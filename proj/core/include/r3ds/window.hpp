#pragma once
#include <vector>

#include "r3ds/ops.hpp"

// Window geometry for shifted-window attention. Partitioning, cyclic shifts
// and patch-merging gathers are all expressed as per-sample element
// bijections consumed by gather_per_slice, so one autodiff rule covers them
// and forward/inverse maps are exact inverses by construction.
//
// Feature maps are (b, h, w, c) row-major tensors.

namespace r3ds {

// (b,h,w,c) -> (b*nW, M*M, c), windows row-major across and within.
std::vector<int64_t> window_partition_indices(int h, int w, int c, int M);

// (b*nW, M*M, c) viewed as (b, h*w*c) -> (b,h,w,c).
std::vector<int64_t> window_reverse_indices(int h, int w, int c, int M);

// Toroidal roll by (-shift, -shift): out[y][x] = in[(y+shift)%h][(x+shift)%w].
// Negative shift rolls the other way; the inverse of `s` is `-s`.
std::vector<int64_t> cyclic_shift_indices(int h, int w, int c, int shift);

// 2x2 neighborhood concat in the fixed (dy,dx) order (0,0),(1,0),(0,1),(1,1):
// (b,h,w,c) -> (b, h/2, w/2, 4c).
std::vector<int64_t> patch_merge_indices(int h, int w, int c);

// (b,3,S,S) image -> (b, (S/p)^2, p*p*3) patch rows; within a patch the
// feature order is (py, px, channel), channel fastest.
std::vector<int64_t> patch_embed_indices(int image_side, int patch);

// T^2 lookups into a (2M-1)^2 relative-position table, T = M*M;
// entry (i,j) indexes the coordinate delta of query i and key j.
std::vector<int64_t> relative_position_index(int M);

inline int64_t relative_table_size(int M) { return int64_t(2 * M - 1) * int64_t(2 * M - 1); }

// --- tensor-level wrappers ----------------------------------------------------

template <typename S>
TensorT<S> window_partition(Tape<S>* tp, const TensorT<S>& fm, int M) {
    if (fm.ndim() != 4)
        throw ShapeError("window_partition: expected (b,h,w,c), got " + shape_str(fm.shape));
    int64_t b = fm.shape[0], h = fm.shape[1], w = fm.shape[2], c = fm.shape[3];
    if (h % M != 0 || w % M != 0)
        throw ShapeError("window_partition: grid " + shape_str(fm.shape) +
                         " not divisible by window " + std::to_string(M));
    int64_t nw = (h / M) * (w / M);
    std::vector<int64_t> idx = window_partition_indices(int(h), int(w), int(c), M);
    return gather_per_slice(tp, fm, idx, {b * nw, int64_t(M) * M, c});
}

template <typename S>
TensorT<S> window_reverse(Tape<S>* tp, const TensorT<S>& windows, int h, int w, int M) {
    if (windows.ndim() != 3)
        throw ShapeError("window_reverse: expected (b*nW, M*M, c), got " + shape_str(windows.shape));
    int64_t c = windows.shape[2];
    int64_t nw = (int64_t(h) / M) * (int64_t(w) / M);
    if (nw <= 0 || windows.shape[0] % nw != 0)
        throw ShapeError("window_reverse: window count " + std::to_string(windows.shape[0]) +
                         " does not tile a " + std::to_string(h) + "x" + std::to_string(w) + " grid");
    int64_t b = windows.shape[0] / nw;
    TensorT<S> flat = reshape(tp, windows, {b, nw * int64_t(M) * M * c});
    std::vector<int64_t> idx = window_reverse_indices(h, w, int(c), M);
    return gather_per_slice(tp, flat, idx, {b, int64_t(h), int64_t(w), c});
}

template <typename S>
TensorT<S> cyclic_shift(Tape<S>* tp, const TensorT<S>& fm, int shift) {
    if (fm.ndim() != 4)
        throw ShapeError("cyclic_shift: expected (b,h,w,c), got " + shape_str(fm.shape));
    if (shift == 0) return fm;
    std::vector<int64_t> idx =
        cyclic_shift_indices(int(fm.shape[1]), int(fm.shape[2]), int(fm.shape[3]), shift);
    return gather_per_slice(tp, fm, idx, fm.shape);
}

template <typename S>
TensorT<S> cyclic_unshift(Tape<S>* tp, const TensorT<S>& fm, int shift) {
    return cyclic_shift(tp, fm, -shift);
}

// Additive attention mask (nW, 1, T, T) with entries in {0, -1e4}. After the
// cyclic shift, a window may mix content that was not adjacent in the
// original grid; the 3x3 slicing {[0,h-M), [h-M,h-s), [h-s,h)} of the
// post-shift grid labels those fragments, and a token pair attends iff the
// labels match (equivalently: iff the pair is an unwrapped neighborhood,
// their pre-shift offset equals their in-window offset). -1e4 (not -inf)
// keeps the op finite-difference safe while pushing softmax mass below 1e-4.
template <typename S>
TensorT<S> build_shift_mask(int h, int w, int M, int shift) {
    int64_t nwh = h / M, nww = w / M, nw = nwh * nww, t = int64_t(M) * M;
    TensorT<S> mask = TensorT<S>::zeros({nw, 1, t, t});
    if (shift == 0) return mask;
    auto region = [&](int coord, int extent) {
        if (coord < extent - M) return 0;
        if (coord < extent - shift) return 1;
        return 2;
    };
    // region id at each post-shift cell
    std::vector<int> reg(size_t(h) * size_t(w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            reg[size_t(y) * size_t(w) + size_t(x)] = 3 * region(y, h) + region(x, w);
    for (int64_t wy = 0; wy < nwh; ++wy)
        for (int64_t wx = 0; wx < nww; ++wx) {
            int64_t wi = wy * nww + wx;
            for (int64_t i = 0; i < t; ++i)
                for (int64_t j = 0; j < t; ++j) {
                    int yi = int(wy) * M + int(i) / M, xi = int(wx) * M + int(i) % M;
                    int yj = int(wy) * M + int(j) / M, xj = int(wx) * M + int(j) % M;
                    bool same = reg[size_t(yi) * size_t(w) + size_t(xi)] ==
                                reg[size_t(yj) * size_t(w) + size_t(xj)];
                    mask.data[size_t(((wi * 1 + 0) * t + i) * t + j)] = same ? S(0) : S(-1e4);
                }
        }
    return mask;
}

// Log-spaced signed coordinate offsets feeding the v2 continuous
// position-bias network: ((2M-1)^2, 2) constant.
template <typename S>
TensorT<S> cpb_log_coords(int M) {
    int64_t side = 2 * M - 1;
    TensorT<S> out = TensorT<S>::zeros({side * side, 2});
    for (int64_t dy = -(M - 1); dy <= M - 1; ++dy)
        for (int64_t dx = -(M - 1); dx <= M - 1; ++dx) {
            int64_t row = (dy + M - 1) * side + (dx + M - 1);
            double vals[2] = {double(dy), double(dx)};
            for (int k = 0; k < 2; ++k) {
                double v = M > 1 ? vals[k] * 8.0 / (M - 1) : 0.0;
                double lg = (v > 0 ? 1.0 : v < 0 ? -1.0 : 0.0) * std::log2(1.0 + std::abs(v)) /
                            std::log2(8.0);
                out.data[size_t(row * 2 + k)] = S(lg);
            }
        }
    return out;
}

}  // namespace r3ds
