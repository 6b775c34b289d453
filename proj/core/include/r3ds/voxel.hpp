#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "r3ds/errors.hpp"

namespace r3ds {

// Cubic occupancy grid, x-fastest linear layout: idx = x + side*(y + side*z).
// Probability grids hold values in [0,1]; binary grids hold exactly {0,1}.
struct VoxelGrid {
    enum class Kind { Probability, Binary };

    int side = 0;
    Kind kind = Kind::Binary;
    std::vector<float> values;

    VoxelGrid() = default;
    VoxelGrid(int side_, Kind kind_)
        : side(side_), kind(kind_), values(size_t(side_) * size_t(side_) * size_t(side_), 0.f) {}

    int64_t numel() const { return int64_t(values.size()); }
    int64_t index(int x, int y, int z) const {
        return int64_t(x) + int64_t(side) * (int64_t(y) + int64_t(side) * int64_t(z));
    }
    float at(int x, int y, int z) const { return values[size_t(index(x, y, z))]; }
    float& at(int x, int y, int z) { return values[size_t(index(x, y, z))]; }
    bool occupied(int x, int y, int z) const { return at(x, y, z) > 0.5f; }

    int64_t count_occupied(float threshold = 0.5f) const {
        int64_t n = 0;
        for (float v : values) n += v > threshold;
        return n;
    }

    // Binarize at threshold t (entries strictly above t become occupied).
    VoxelGrid binarized(float t) const {
        VoxelGrid out(side, Kind::Binary);
        for (size_t i = 0; i < values.size(); ++i) out.values[i] = values[i] > t ? 1.f : 0.f;
        return out;
    }
};

struct Point3 {
    double x = 0, y = 0, z = 0;
};

// Centers of occupied voxels that touch the outside: at least one empty
// 6-neighbor or a grid boundary. Coordinates normalized to the unit cube.
std::vector<Point3> surface_points(const VoxelGrid& v);

// Intersection-over-union of {pred > t} and {gt = 1}; an empty union counts
// as a perfect match (both grids empty).
double voxel_iou(const VoxelGrid& pred, const VoxelGrid& gt, double t);

// Surface F-score at distance threshold d (fraction of the unit-cube side).
// Prediction is binarized at t before the surface cloud is built.
double fscore(const VoxelGrid& pred, const VoxelGrid& gt, double t, double d);

struct SampleMetric {
    std::string id;
    double iou = 0;
    double fscore = 0;
};

struct MetricReport {
    double threshold_t = 0.3;
    double distance_d = 0.01;
    std::vector<SampleMetric> samples;

    double mean_iou() const;
    double mean_fscore() const;
    // Human-readable table with per-sample rows and the means.
    std::string table() const;
    // One machine-readable record per sample: "id iou fscore".
    std::string records() const;
};

}  // namespace r3ds
