#pragma once
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "r3ds/image.hpp"
#include "r3ds/rng.hpp"
#include "r3ds/voxel.hpp"

// Procedural dataset: analytic primitive solids voxelized on the unit cube,
// rendered as single orthographic views. Everything is a pure function of
// (spec, view, image side); regenerating with the same seed reproduces every
// byte on disk.

namespace r3ds {

enum class Primitive { Box, Sphere, Cylinder, LShape, TwoBox };

const char* primitive_name(Primitive p);

struct ShapeSpec {
    Primitive primitive = Primitive::Box;
    // Size parameters as unit-cube fractions; meaning depends on the primitive
    // (box: side lengths, sphere: sx = radius, cylinder: sx = radius, sz = height).
    double sx = 0.4, sy = 0.4, sz = 0.4;
    int rot90 = 0;      // 90-degree steps around the z axis
    double yaw = 0.0;   // additional small rotation around z, radians
    double tx = 0, ty = 0, tz = 0;  // translation from the cube center
    uint64_t seed = 0;
};

// Occupancy fell outside [1%, 60%]: caller should redraw with a fresh seed.
struct OccupancySignal : std::runtime_error {
    double fraction;
    explicit OccupancySignal(double f)
        : std::runtime_error("shape occupancy " + std::to_string(f) +
                             " outside [0.01, 0.60], regenerate with a new seed"),
          fraction(f) {}
};

// Voxelize: each voxel is occupied iff its center lies inside the solid.
VoxelGrid gen_shape(const ShapeSpec& spec, int side = 32);

ShapeSpec draw_shape_spec(Rng& rng);

// Orthographic camera along one of the six axis directions plus the fixed
// light model: intensity = ambient + diffuse * (1 - depth/side), tinted per
// channel. Background is a constant color.
struct View {
    int axis = 5;  // 0..5 = +x,-x,+y,-y,+z,-z
    double ambient = 0.30;
    double diffuse = 0.65;
    std::array<double, 3> tint{1.0, 0.95, 0.88};
    double background = 0.10;
};

// Distance (in voxels, from the near face) of the first occupied voxel per
// column; -1 where the ray misses. Row-major (v, u) of size side^2.
std::vector<int> depth_map(const VoxelGrid& v, int axis);

// image_side must be one of {32, 64, 128} (integer upsampling of the grid).
Image render_ortho(const VoxelGrid& v, const View& view, int image_side);

// In-memory sample with generation provenance.
struct ImageSample {
    std::string id;
    Image image;
    VoxelGrid voxels;
    ShapeSpec spec;
    View view;
};

// Deterministically draw a spec/view pair that satisfies the occupancy
// invariant, retrying with derived seeds on OccupancySignal.
ImageSample gen_sample(uint64_t seed, uint64_t index, int image_side, int grid_side = 32);

struct DatasetOptions {
    int n = 100;
    uint64_t seed = 1;
    double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
    int image_side = 64;
    int grid_side = 32;
    int threads = 1;
};

struct ManifestEntry {
    std::string id;
    std::string image_path;  // relative to the dataset directory
    std::string voxel_path;
    std::string split;  // train | val | test
};

// Generate n samples, write images/voxels/manifest under out_dir, return the
// manifest. Deterministic for a fixed option set regardless of thread count.
std::vector<ManifestEntry> make_dataset(const std::string& out_dir, const DatasetOptions& opt);

std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace r3ds
