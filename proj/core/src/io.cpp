#include "r3ds/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "r3ds/errors.hpp"

namespace r3ds {

namespace {

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

std::ifstream open_in(const std::string& path, bool binary) {
    std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
    if (!f) throw IoError("cannot open for reading: " + path);
    return f;
}

void put_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is, const std::string& path, int64_t& offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated at byte " + std::to_string(offset));
    offset += 4;
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void put_f32le(std::ostream& os, float v) {
    uint32_t u;
    static_assert(sizeof u == sizeof v);
    std::memcpy(&u, &v, 4);
    put_u32le(os, u);
}

float get_f32le(std::istream& is, const std::string& path, int64_t& offset) {
    uint32_t u = get_u32le(is, path, offset);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

constexpr char kMagicBinary[5] = {'R', 'V', 'O', 'X', '1'};
constexpr char kMagicFloat[5] = {'R', 'V', 'O', 'X', 'F'};

}  // namespace

void save_voxels(const std::string& path, const VoxelGrid& v) {
    std::ofstream f = open_out(path, true);
    bool binary = v.kind == VoxelGrid::Kind::Binary;
    f.write(binary ? kMagicBinary : kMagicFloat, 5);
    put_u32le(f, uint32_t(v.side));
    put_u32le(f, uint32_t(v.side));
    put_u32le(f, uint32_t(v.side));
    if (binary) {
        int64_t nbytes = (v.numel() + 7) / 8;
        std::vector<unsigned char> packed(size_t(nbytes), 0);
        for (int64_t i = 0; i < v.numel(); ++i)
            if (v.values[size_t(i)] > 0.5f) packed[size_t(i / 8)] |= static_cast<unsigned char>(1u << (i % 8));
        f.write(reinterpret_cast<const char*>(packed.data()), std::streamsize(packed.size()));
    } else {
        for (float x : v.values) put_f32le(f, x);
    }
    if (!f) throw IoError("write failed: " + path);
}

VoxelGrid load_voxels(const std::string& path) {
    std::ifstream f = open_in(path, true);
    int64_t offset = 0;
    char magic[5];
    if (!f.read(magic, 5)) throw FormatError(path + ": truncated at byte 0");
    offset = 5;
    bool binary;
    if (std::equal(magic, magic + 5, kMagicBinary))
        binary = true;
    else if (std::equal(magic, magic + 5, kMagicFloat))
        binary = false;
    else
        throw FormatError(path + ": bad magic at byte 0");
    uint32_t d = get_u32le(f, path, offset), h = get_u32le(f, path, offset),
             w = get_u32le(f, path, offset);
    if (d != h || h != w || d == 0)
        throw FormatError(path + ": non-cubic dims " + std::to_string(d) + "x" + std::to_string(h) +
                          "x" + std::to_string(w) + " at byte 5");
    VoxelGrid out(int(d), binary ? VoxelGrid::Kind::Binary : VoxelGrid::Kind::Probability);
    if (binary) {
        int64_t nbytes = (out.numel() + 7) / 8;
        std::vector<unsigned char> packed(static_cast<size_t>(nbytes), 0);
        if (!f.read(reinterpret_cast<char*>(packed.data()), nbytes))
            throw FormatError(path + ": truncated at byte " + std::to_string(offset));
        for (int64_t i = 0; i < out.numel(); ++i)
            out.values[size_t(i)] = (packed[size_t(i / 8)] >> (i % 8)) & 1u ? 1.f : 0.f;
    } else {
        for (int64_t i = 0; i < out.numel(); ++i) out.values[size_t(i)] = get_f32le(f, path, offset);
    }
    return out;
}

void save_image(const std::string& path, const Image& img) {
    std::ofstream f = open_out(path, true);
    f << "P6\n" << img.side << ' ' << img.side << "\n255\n";
    std::vector<unsigned char> row(size_t(img.side) * 3);
    for (int r = 0; r < img.side; ++r) {
        for (int c = 0; c < img.side; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                float v = std::clamp(img.at(ch, r, c), 0.f, 1.f);
                row[size_t(c) * 3 + size_t(ch)] = static_cast<unsigned char>(std::lround(255.f * v));
            }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!f) throw IoError("write failed: " + path);
}

namespace {

int ppm_token(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments, returns a nonnegative integer
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError(path + ": malformed PPM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream f = open_in(path, true);
    char m0 = char(f.get()), m1 = char(f.get());
    if (m0 != 'P' || m1 != '6') throw FormatError(path + ": bad magic at byte 0, expected P6");
    int w = ppm_token(f, path);
    int h = ppm_token(f, path);
    int maxval = ppm_token(f, path);
    if (w != h) throw FormatError(path + ": non-square image " + std::to_string(w) + "x" + std::to_string(h));
    if (maxval != 255) throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
    Image img(w);
    std::vector<unsigned char> row(size_t(w) * 3);
    for (int r = 0; r < h; ++r) {
        if (!f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size())))
            throw FormatError(path + ": truncated pixel data in row " + std::to_string(r));
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, r, c) = float(row[size_t(c) * 3 + size_t(ch)]) / 255.f;
    }
    return img;
}

void export_obj(const std::string& path, const VoxelGrid& binary, bool dedup) {
    std::ofstream f = open_out(path, false);
    f << "# voxel reconstruction, " << binary.count_occupied() << " occupied voxels\n";
    const double inv = 1.0 / binary.side;
    // corner order: bit0 = +x, bit1 = +y, bit2 = +z
    static const int kFaces[12][3] = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6},
                                      {0, 1, 5}, {0, 5, 4}, {2, 6, 7}, {2, 7, 3},
                                      {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    std::map<std::array<int, 3>, int64_t> corner_ids;
    int64_t next_vertex = 1;  // OBJ indices are 1-based
    std::ostringstream verts, faces;
    for (int z = 0; z < binary.side; ++z)
        for (int y = 0; y < binary.side; ++y)
            for (int x = 0; x < binary.side; ++x) {
                if (!binary.occupied(x, y, z)) continue;
                std::array<int64_t, 8> ids{};
                for (int k = 0; k < 8; ++k) {
                    std::array<int, 3> corner{x + (k & 1), y + ((k >> 1) & 1), z + ((k >> 2) & 1)};
                    if (dedup) {
                        auto it = corner_ids.find(corner);
                        if (it != corner_ids.end()) {
                            ids[size_t(k)] = it->second;
                            continue;
                        }
                        corner_ids.emplace(corner, next_vertex);
                    }
                    ids[size_t(k)] = next_vertex++;
                    verts << "v " << corner[0] * inv << ' ' << corner[1] * inv << ' '
                          << corner[2] * inv << '\n';
                }
                for (const auto& tri : kFaces)
                    faces << "f " << ids[size_t(tri[0])] << ' ' << ids[size_t(tri[1])] << ' '
                          << ids[size_t(tri[2])] << '\n';
            }
    f << verts.str() << faces.str();
    if (!f) throw IoError("write failed: " + path);
}

ObjStats obj_stats(const std::string& path) {
    std::ifstream f = open_in(path, false);
    ObjStats st;
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("v ", 0) == 0) ++st.vertices;
        if (line.rfind("f ", 0) == 0) ++st.faces;
    }
    return st;
}

void write_loss_curve(const std::string& path, const std::vector<LossRecord>& records) {
    std::ofstream f = open_out(path, false);
    f << "# step loss wall_ms\n";
    char buf[96];
    for (const LossRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%lld %.9g %.3f\n", static_cast<long long>(r.step), r.loss,
                      r.wall_ms);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<LossRecord> read_loss_curve(const std::string& path) {
    std::ifstream f = open_in(path, false);
    std::vector<LossRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        LossRecord r;
        long long step;
        if (std::sscanf(line.c_str(), "%lld %lf %lf", &step, &r.loss, &r.wall_ms) != 3)
            throw FormatError(path + ": malformed record at line " + std::to_string(lineno));
        r.step = step;
        out.push_back(r);
    }
    return out;
}

void write_loss_svg(const std::string& path, const std::vector<LossRecord>& records) {
    const int W = 720, H = 440, ml = 64, mr = 16, mt = 20, mb = 44;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!records.empty()) {
        xmin = double(records.front().step);
        xmax = double(records.back().step);
        ymin = ymax = records.front().loss;
        for (const auto& r : records) {
            ymin = std::min(ymin, r.loss);
            ymax = std::max(ymax, r.loss);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1e-9;
    auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto sy = [&](double v) { return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ofstream f = open_out(path, false);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "<text x='%d' y='%d' font-size='12'>step</text>"
                  "<text x='8' y='%d' font-size='12'>loss</text>",
                  (W - mr + ml) / 2, H - 12, (H - mb + mt) / 2);
    f << buf << '\n';
    std::snprintf(buf, sizeof buf,
                  "<text x='%d' y='%d' font-size='11'>%lld</text>"
                  "<text x='%d' y='%d' font-size='11'>%lld</text>",
                  ml, H - mb + 16, static_cast<long long>(xmin), W - mr - 40, H - mb + 16,
                  static_cast<long long>(xmax));
    f << buf << '\n';
    std::snprintf(buf, sizeof buf,
                  "<text x='6' y='%d' font-size='11'>%.4g</text>"
                  "<text x='6' y='%d' font-size='11'>%.4g</text>",
                  H - mb, ymin, mt + 10, ymax);
    f << buf << '\n';
    if (!records.empty()) {
        f << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
        for (const auto& r : records) f << sx(double(r.step)) << ',' << sy(r.loss) << ' ';
        f << "'/>\n";
    }
    f << "</svg>\n";
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace r3ds
