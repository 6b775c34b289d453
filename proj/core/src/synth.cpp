#include "r3ds/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "r3ds/io.hpp"

namespace r3ds {

const char* primitive_name(Primitive p) {
    switch (p) {
        case Primitive::Box: return "box";
        case Primitive::Sphere: return "sphere";
        case Primitive::Cylinder: return "cylinder";
        case Primitive::LShape: return "l-shape";
        case Primitive::TwoBox: return "two-box";
    }
    return "?";
}

namespace {

struct Vec3 {
    double x, y, z;
};

bool inside_box(const Vec3& v, double hx, double hy, double hz) {
    return std::abs(v.x) <= hx && std::abs(v.y) <= hy && std::abs(v.z) <= hz;
}

bool inside_solid(const ShapeSpec& s, const Vec3& v) {
    switch (s.primitive) {
        case Primitive::Box:
            return inside_box(v, s.sx / 2, s.sy / 2, s.sz / 2);
        case Primitive::Sphere:
            return v.x * v.x + v.y * v.y + v.z * v.z <= s.sx * s.sx;
        case Primitive::Cylinder:
            return v.x * v.x + v.y * v.y <= s.sx * s.sx && std::abs(v.z) <= s.sz / 2;
        case Primitive::LShape: {
            if (std::abs(v.z) > s.sz / 2) return false;
            double w = 0.4 * std::min(s.sx, s.sy);
            bool arm1 = v.x >= -s.sx / 2 && v.x <= s.sx / 2 && v.y >= -s.sy / 2 &&
                        v.y <= -s.sy / 2 + w;
            bool arm2 = v.x >= -s.sx / 2 && v.x <= -s.sx / 2 + w && v.y >= -s.sy / 2 &&
                        v.y <= s.sy / 2;
            return arm1 || arm2;
        }
        case Primitive::TwoBox: {
            Vec3 a{v.x + 0.12, v.y + 0.12, v.z};
            Vec3 b{v.x - 0.12, v.y - 0.12, v.z};
            return inside_box(a, s.sx / 2, s.sy / 2, s.sz / 2) ||
                   inside_box(b, s.sz / 2, s.sx / 2, s.sy / 2);
        }
    }
    return false;
}

}  // namespace

VoxelGrid gen_shape(const ShapeSpec& spec, int side) {
    VoxelGrid out(side, VoxelGrid::Kind::Binary);
    const double theta = 1.5707963267948966 * spec.rot90 + spec.yaw;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = 0.5 + spec.tx, cy = 0.5 + spec.ty, cz = 0.5 + spec.tz;
    for (int z = 0; z < side; ++z)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                double px = (x + 0.5) / side - cx;
                double py = (y + 0.5) / side - cy;
                double pz = (z + 0.5) / side - cz;
                // undo the z rotation
                Vec3 local{c * px + s * py, -s * px + c * py, pz};
                if (inside_solid(spec, local)) out.at(x, y, z) = 1.f;
            }
    double frac = double(out.count_occupied()) / double(out.numel());
    if (frac < 0.01 || frac > 0.60) throw OccupancySignal(frac);
    return out;
}

ShapeSpec draw_shape_spec(Rng& rng) {
    ShapeSpec s;
    s.primitive = Primitive(rng.next_below(5));
    switch (s.primitive) {
        case Primitive::Box:
            s.sx = rng.uniform(0.25, 0.70);
            s.sy = rng.uniform(0.25, 0.70);
            s.sz = rng.uniform(0.25, 0.70);
            break;
        case Primitive::Sphere:
            s.sx = rng.uniform(0.15, 0.35);
            s.sy = s.sz = s.sx;
            break;
        case Primitive::Cylinder:
            s.sx = rng.uniform(0.12, 0.30);
            s.sy = s.sx;
            s.sz = rng.uniform(0.30, 0.80);
            break;
        case Primitive::LShape:
            s.sx = rng.uniform(0.40, 0.80);
            s.sy = rng.uniform(0.40, 0.80);
            s.sz = rng.uniform(0.25, 0.60);
            break;
        case Primitive::TwoBox:
            s.sx = rng.uniform(0.20, 0.45);
            s.sy = rng.uniform(0.20, 0.45);
            s.sz = rng.uniform(0.20, 0.45);
            break;
    }
    s.rot90 = int(rng.next_below(4));
    s.yaw = rng.next_double() < 0.5 ? rng.uniform(-0.35, 0.35) : 0.0;
    s.tx = rng.uniform(-0.12, 0.12);
    s.ty = rng.uniform(-0.12, 0.12);
    s.tz = rng.uniform(-0.12, 0.12);
    return s;
}

std::vector<int> depth_map(const VoxelGrid& v, int axis) {
    if (axis < 0 || axis > 5) throw ContractError("depth_map: axis must be in [0,5]");
    const int n = v.side;
    std::vector<int> depth(size_t(n) * size_t(n), -1);
    for (int vv = 0; vv < n; ++vv)
        for (int uu = 0; uu < n; ++uu) {
            for (int t = 0; t < n; ++t) {
                int x, y, z;
                switch (axis) {
                    case 0: x = n - 1 - t, y = uu, z = vv; break;  // +x
                    case 1: x = t, y = uu, z = vv; break;          // -x
                    case 2: y = n - 1 - t, x = uu, z = vv; break;  // +y
                    case 3: y = t, x = uu, z = vv; break;          // -y
                    case 4: z = n - 1 - t, x = uu, y = vv; break;  // +z
                    default: z = t, x = uu, y = vv; break;         // -z
                }
                if (v.occupied(x, y, z)) {
                    depth[size_t(vv) * size_t(n) + size_t(uu)] = t;
                    break;
                }
            }
        }
    return depth;
}

Image render_ortho(const VoxelGrid& v, const View& view, int image_side) {
    if (image_side != 32 && image_side != 64 && image_side != 128)
        throw ConfigError("render_ortho: image side must be 32, 64 or 128, got " +
                          std::to_string(image_side));
    std::vector<int> depth = depth_map(v, view.axis);
    const int scale = image_side / v.side;
    if (scale < 1 || image_side % v.side != 0)
        throw ConfigError("render_ortho: image side must be a multiple of the grid side");
    Image img(image_side);
    for (int r = 0; r < image_side; ++r)
        for (int c = 0; c < image_side; ++c) {
            int d = depth[size_t(r / scale) * size_t(v.side) + size_t(c / scale)];
            for (int ch = 0; ch < 3; ++ch) {
                double val = view.background;
                if (d >= 0) {
                    double inten = view.ambient + view.diffuse * (1.0 - double(d) / v.side);
                    val = std::clamp(inten * view.tint[size_t(ch)], 0.0, 1.0);
                }
                img.at(ch, r, c) = float(val);
            }
        }
    return img;
}

ImageSample gen_sample(uint64_t seed, uint64_t index, int image_side, int grid_side) {
    for (uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng = Rng::stream(seed, "sample", index * 64 + attempt);
        ShapeSpec spec = draw_shape_spec(rng);
        spec.seed = seed;
        View view;
        view.axis = int(rng.next_below(6));
        try {
            VoxelGrid vox = gen_shape(spec, grid_side);
            char id[32];
            std::snprintf(id, sizeof id, "s%05llu", static_cast<unsigned long long>(index));
            return ImageSample{id, render_ortho(vox, view, image_side), std::move(vox), spec, view};
        } catch (const OccupancySignal&) {
            continue;  // redraw with the next derived seed
        }
    }
    throw ContractError("gen_sample: no valid shape after 64 attempts (seed " +
                        std::to_string(seed) + ", index " + std::to_string(index) + ")");
}

namespace {

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const ManifestEntry& e : entries)
        f << e.id << '\t' << e.image_path << '\t' << e.voxel_path << '\t' << e.split << '\n';
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace

std::vector<ManifestEntry> make_dataset(const std::string& out_dir, const DatasetOptions& opt) {
    if (opt.n < 10) throw ConfigError("make_dataset: need n >= 10, got " + std::to_string(opt.n));
    double rsum = opt.train_ratio + opt.val_ratio + opt.test_ratio;
    if (std::abs(rsum - 1.0) > 1e-9)
        throw ConfigError("make_dataset: split ratios must sum to 1, got " + std::to_string(rsum));

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "voxels");

    // split assignment: deterministic shuffle of indices, then contiguous cuts
    std::vector<int> order(size_t(opt.n));
    for (int i = 0; i < opt.n; ++i) order[size_t(i)] = i;
    Rng shuffle_rng = Rng::stream(opt.seed, "split");
    for (int i = opt.n - 1; i > 0; --i)
        std::swap(order[size_t(i)], order[size_t(shuffle_rng.next_below(uint64_t(i) + 1))]);
    int n_train = int(std::floor(opt.train_ratio * opt.n));
    int n_val = int(std::floor(opt.val_ratio * opt.n));
    int n_test = opt.n - n_train - n_val;
    (void)n_test;
    std::vector<std::string> split_of(size_t(opt.n));
    for (int k = 0; k < opt.n; ++k)
        split_of[size_t(order[size_t(k)])] = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");

    std::vector<ManifestEntry> entries(size_t(opt.n));
    int nthreads = std::max(1, opt.threads);
    auto worker = [&](int t0) {
        for (int i = t0; i < opt.n; i += nthreads) {
            ImageSample s = gen_sample(opt.seed, uint64_t(i), opt.image_side, opt.grid_side);
            std::string img_rel = "images/" + s.id + ".ppm";
            std::string vox_rel = "voxels/" + s.id + ".rvox";
            save_image((fs::path(out_dir) / img_rel).string(), s.image);
            save_voxels((fs::path(out_dir) / vox_rel).string(), s.voxels);
            entries[size_t(i)] = {s.id, img_rel, vox_rel, split_of[size_t(i)]};
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    write_manifest((fs::path(out_dir) / "manifest.txt").string(), entries);
    return entries;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        ManifestEntry e;
        size_t p0 = line.find('\t');
        size_t p1 = p0 == std::string::npos ? p0 : line.find('\t', p0 + 1);
        size_t p2 = p1 == std::string::npos ? p1 : line.find('\t', p1 + 1);
        if (p2 == std::string::npos)
            throw FormatError(path + ": malformed manifest line " + std::to_string(lineno));
        e.id = line.substr(0, p0);
        e.image_path = line.substr(p0 + 1, p1 - p0 - 1);
        e.voxel_path = line.substr(p1 + 1, p2 - p1 - 1);
        e.split = line.substr(p2 + 1);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace r3ds
