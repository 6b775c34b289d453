#include "r3ds/voxel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace r3ds {

std::vector<Point3> surface_points(const VoxelGrid& v) {
    std::vector<Point3> pts;
    const int n = v.side;
    auto empty_at = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) return true;
        return !v.occupied(x, y, z);
    };
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (!v.occupied(x, y, z)) continue;
                bool boundary = empty_at(x - 1, y, z) || empty_at(x + 1, y, z) ||
                                empty_at(x, y - 1, z) || empty_at(x, y + 1, z) ||
                                empty_at(x, y, z - 1) || empty_at(x, y, z + 1);
                if (boundary)
                    pts.push_back({(x + 0.5) / n, (y + 0.5) / n, (z + 0.5) / n});
            }
    return pts;
}

double voxel_iou(const VoxelGrid& pred, const VoxelGrid& gt, double t) {
    if (pred.side != gt.side)
        throw ShapeError("voxel_iou: grid sides differ, " + std::to_string(pred.side) + " vs " +
                         std::to_string(gt.side));
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        bool p = pred.values[i] > float(t);
        bool g = gt.values[i] > 0.5f;
        inter += p && g;
        uni += p || g;
    }
    if (uni == 0) return 1.0;
    return double(inter) / double(uni);
}

namespace {

// Uniform hash grid with cell size >= d so neighbors live in the 27 adjacent cells.
struct PointHash {
    double cell;
    int dim;
    std::unordered_map<int64_t, std::vector<int>> buckets;
    const std::vector<Point3>* pts;

    PointHash(const std::vector<Point3>& p, double d) : pts(&p) {
        cell = std::max(d, 1e-9);
        dim = int(std::ceil(1.0 / cell)) + 2;
        for (int i = 0; i < int(p.size()); ++i) buckets[key(p[size_t(i)])].push_back(i);
    }
    int64_t key(const Point3& p) const {
        int64_t cx = int64_t(p.x / cell), cy = int64_t(p.y / cell), cz = int64_t(p.z / cell);
        return (cx * dim + cy) * dim + cz;
    }
    bool any_within(const Point3& q, double d) const {
        double d2 = d * d;
        int64_t cx = int64_t(q.x / cell), cy = int64_t(q.y / cell), cz = int64_t(q.z / cell);
        for (int64_t dx = -1; dx <= 1; ++dx)
            for (int64_t dy = -1; dy <= 1; ++dy)
                for (int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = buckets.find(((cx + dx) * dim + (cy + dy)) * dim + (cz + dz));
                    if (it == buckets.end()) continue;
                    for (int i : it->second) {
                        const Point3& p = (*pts)[size_t(i)];
                        double ddx = p.x - q.x, ddy = p.y - q.y, ddz = p.z - q.z;
                        if (ddx * ddx + ddy * ddy + ddz * ddz <= d2) return true;
                    }
                }
        return false;
    }
};

double matched_fraction(const std::vector<Point3>& from, const PointHash& to, double d) {
    if (from.empty()) return 0.0;
    int64_t hit = 0;
    for (const Point3& q : from) hit += to.any_within(q, d);
    return double(hit) / double(from.size());
}

}  // namespace

double fscore(const VoxelGrid& pred, const VoxelGrid& gt, double t, double d) {
    if (pred.side != gt.side)
        throw ShapeError("fscore: grid sides differ, " + std::to_string(pred.side) + " vs " +
                         std::to_string(gt.side));
    if (d <= 0) throw ContractError("fscore: distance threshold must be positive");
    std::vector<Point3> ps = surface_points(pred.binarized(float(t)));
    std::vector<Point3> gs = surface_points(gt);
    if (ps.empty() && gs.empty()) return 1.0;
    if (ps.empty() || gs.empty()) return 0.0;
    PointHash hp(ps, d), hg(gs, d);
    double precision = matched_fraction(ps, hg, d);
    double recall = matched_fraction(gs, hp, d);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double MetricReport::mean_iou() const {
    double s = 0;
    for (const auto& m : samples) s += m.iou;
    return samples.empty() ? 0.0 : s / double(samples.size());
}

double MetricReport::mean_fscore() const {
    double s = 0;
    for (const auto& m : samples) s += m.fscore;
    return samples.empty() ? 0.0 : s / double(samples.size());
}

std::string MetricReport::table() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-16s %8s %8s\n", "sample", "iou", "fscore");
    os << line;
    for (const auto& m : samples) {
        std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f\n", m.id.c_str(), m.iou, m.fscore);
        os << line;
    }
    std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f   (t=%.2f, d=%.3f, n=%zu)\n", "mean",
                  mean_iou(), mean_fscore(), threshold_t, distance_d, samples.size());
    os << line;
    return os.str();
}

std::string MetricReport::records() const {
    std::ostringstream os;
    for (const auto& m : samples) os << m.id << ' ' << m.iou << ' ' << m.fscore << '\n';
    return os.str();
}

}  // namespace r3ds
