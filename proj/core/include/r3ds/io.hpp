#pragma once
#include <string>
#include <vector>

#include "r3ds/image.hpp"
#include "r3ds/voxel.hpp"

namespace r3ds {

// Voxel files. Binary grids use magic "RVOX1": three little-endian u32 dims
// followed by ceil(d*h*w/8) bytes of bit-packed occupancy, x fastest, LSB
// first. Probability grids use magic "RVOXF" with one little-endian f32 per
// voxel in the same order. Kind is chosen by the grid / detected by magic.
void save_voxels(const std::string& path, const VoxelGrid& v);
VoxelGrid load_voxels(const std::string& path);

// Binary PPM (P6), 8-bit, byte = round(255 * value).
void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

// One cube per occupied voxel, coordinates normalized to the unit cube.
// With dedup, shared corners are emitted once.
void export_obj(const std::string& path, const VoxelGrid& binary, bool dedup);

struct ObjStats {
    int64_t vertices = 0;
    int64_t faces = 0;
};
ObjStats obj_stats(const std::string& path);

// Loss curve: line-oriented "step loss wall_ms" records.
struct LossRecord {
    int64_t step = 0;
    double loss = 0;
    double wall_ms = 0;
};
void write_loss_curve(const std::string& path, const std::vector<LossRecord>& records);
std::vector<LossRecord> read_loss_curve(const std::string& path);
void write_loss_svg(const std::string& path, const std::vector<LossRecord>& records);

}  // namespace r3ds
