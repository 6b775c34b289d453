#pragma once
#include "r3ds/ops.hpp"
#include "r3ds/voxel.hpp"

namespace r3ds {

// Two-sided soft Dice loss over occupancy grids:
//   1 - (sum p*g + eps)/(sum(p+g) + eps) - (sum (1-p)(1-g) + eps)/(sum(2-p-g) + eps)
// p holds probabilities, g binary ground truth. Both fractions are smoothed
// because the second denominator is exactly zero when p = g = 1 everywhere.
// Input (b, n) gives the mean over the batch; (n) is a single sample.
template <typename S>
TensorT<S> dice_loss(Tape<S>* tp, const TensorT<S>& p, const TensorT<S>& g, double eps = 1e-6) {
    if (p.shape != g.shape)
        throw ShapeError("dice_loss: shapes differ, " + shape_str(p.shape) + " vs " +
                         shape_str(g.shape));
    for (const S& v : g.data)
        if (v != S(0) && v != S(1)) throw ContractError("dice_loss: ground truth must be binary");
    const double n = double(p.shape.back());

    TensorT<S> s_pg = row_sum(tp, mul(tp, p, g));
    TensorT<S> s_p = row_sum(tp, p);
    TensorT<S> s_g = row_sum(tp, g);
    TensorT<S> s_p_plus_g = add(tp, s_p, s_g);

    TensorT<S> occupied = div(tp, affine(tp, s_pg, 1.0, eps), affine(tp, s_p_plus_g, 1.0, eps));
    // sum (1-p)(1-g) = n - sum p - sum g + sum p*g
    TensorT<S> s_comp = affine(tp, sub(tp, s_pg, s_p_plus_g), 1.0, n);
    TensorT<S> empty =
        div(tp, affine(tp, s_comp, 1.0, eps), affine(tp, s_p_plus_g, -1.0, 2.0 * n + eps));
    TensorT<S> per_sample = affine(tp, add(tp, occupied, empty), -1.0, 1.0);
    return mean_all(tp, per_sample);
}

// Plain-number convenience over VoxelGrids (no tape).
inline double dice_loss_value(const VoxelGrid& p, const VoxelGrid& g, double eps = 1e-6) {
    if (p.side != g.side)
        throw ShapeError("dice_loss: grid sides differ, " + std::to_string(p.side) + " vs " +
                         std::to_string(g.side));
    TensorT<double> pt({p.numel()}, std::vector<double>(p.values.begin(), p.values.end()));
    TensorT<double> gt({g.numel()}, std::vector<double>(g.values.begin(), g.values.end()));
    return dice_loss<double>(nullptr, pt, gt, eps).data[0];
}

// View a (d,h,w) slice of a decoder output tensor as a probability grid.
// Tensor layout (z,y,x) row-major matches the grid's x-fastest layout.
template <typename S>
VoxelGrid grid_from_tensor(const TensorT<S>& t, int64_t sample, int side) {
    VoxelGrid out(side, VoxelGrid::Kind::Probability);
    int64_t n = int64_t(side) * side * side;
    for (int64_t i = 0; i < n; ++i) out.values[size_t(i)] = float(t.data[size_t(sample * n + i)]);
    return out;
}

template <typename S>
void grid_to_tensor_row(const VoxelGrid& g, TensorT<S>& t, int64_t sample) {
    int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) t.data[size_t(sample * n + i)] = S(g.values[size_t(i)]);
}

}  // namespace r3ds
