#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "r3ds/io.hpp"
#include "r3ds/synth.hpp"

using namespace r3ds;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
    static int counter = 0;
    std::string d = (fs::temp_directory_path() / ("r3ds_test_" + std::to_string(counter++))).string();
    fs::create_directories(d);
    return d;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen_shape: sphere volume, full-cube rejection, determinism") {
    ShapeSpec sphere;
    sphere.primitive = Primitive::Sphere;
    sphere.sx = sphere.sy = sphere.sz = 0.4;
    VoxelGrid g = gen_shape(sphere, 32);
    double frac = double(g.count_occupied()) / double(g.numel());
    double analytic = 4.0 / 3.0 * 3.14159265358979 * 0.4 * 0.4 * 0.4;
    CHECK(std::abs(frac - analytic) < 0.02);

    ShapeSpec full;
    full.primitive = Primitive::Box;
    full.sx = full.sy = full.sz = 2.0;  // spans (and exceeds) the cube
    CHECK_THROWS_AS(gen_shape(full, 32), OccupancySignal);

    ImageSample s1 = gen_sample(42, 3, 64);
    ImageSample s2 = gen_sample(42, 3, 64);
    CHECK(s1.voxels.values == s2.voxels.values);
    CHECK(s1.image.values == s2.image.values);
}

TEST_CASE("render_ortho: background, first-hit brightness, depth oracle, silhouette") {
    View view;
    view.axis = 5;
    VoxelGrid empty(32, VoxelGrid::Kind::Binary);
    Image bg = render_ortho(empty, view, 64);
    for (float v : bg.values) CHECK(v == doctest::Approx(view.background));

    Rng rng = Rng::stream(91, "render");
    ShapeSpec spec = draw_shape_spec(rng);
    VoxelGrid g = gen_shape(spec, 32);
    for (int axis = 0; axis < 6; ++axis) {
        std::vector<int> depth = depth_map(g, axis);
        // independent per-pixel first-occupied scan
        for (int v = 0; v < 32; ++v)
            for (int u = 0; u < 32; ++u) {
                int want = -1;
                for (int t = 0; t < 32 && want < 0; ++t) {
                    int x = 0, y = 0, z = 0;
                    switch (axis) {
                        case 0: x = 31 - t, y = u, z = v; break;
                        case 1: x = t, y = u, z = v; break;
                        case 2: y = 31 - t, x = u, z = v; break;
                        case 3: y = t, x = u, z = v; break;
                        case 4: z = 31 - t, x = u, y = v; break;
                        default: z = t, x = u, y = v; break;
                    }
                    if (g.occupied(x, y, z)) want = t;
                }
                CHECK(depth[size_t(v) * 32 + size_t(u)] == want);
            }
        // silhouette equals the projection mask, and hits are brighter than background
        View vw;
        vw.axis = axis;
        Image img = render_ortho(g, vw, 64);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                bool hit = depth[size_t(r / 2) * 32 + size_t(c / 2)] >= 0;
                bool is_bg = true;
                for (int ch = 0; ch < 3; ++ch)
                    if (img.at(ch, r, c) != doctest::Approx(vw.background)) is_bg = false;
                CHECK(hit == !is_bg);
                if (hit)
                    CHECK(img.at(0, r, c) > vw.background);
            }
    }
}

TEST_CASE("render_ortho rejects unsupported image sides") {
    VoxelGrid g(32, VoxelGrid::Kind::Binary);
    View v;
    CHECK_THROWS_AS(render_ortho(g, v, 48), ConfigError);
}

TEST_CASE("make_dataset: split sizes, unique ids, byte-identical regeneration") {
    DatasetOptions opt;
    opt.n = 100;
    opt.seed = 7;
    opt.image_side = 32;
    std::string d1 = tmp_dir(), d2 = tmp_dir();
    std::vector<ManifestEntry> m1 = make_dataset(d1, opt);
    REQUIRE(m1.size() == 100);
    int train = 0, val = 0, test = 0;
    std::set<std::string> ids;
    for (const auto& e : m1) {
        ids.insert(e.id);
        train += e.split == "train";
        val += e.split == "val";
        test += e.split == "test";
    }
    CHECK(train == 80);
    CHECK(val == 10);
    CHECK(test == 10);
    CHECK(ids.size() == 100);

    opt.threads = 2;
    std::vector<ManifestEntry> m2 = make_dataset(d2, opt);
    CHECK(slurp(d1 + "/manifest.txt") == slurp(d2 + "/manifest.txt"));
    for (const auto& e : m1) {
        CHECK(slurp(d1 + "/" + e.image_path) == slurp(d2 + "/" + e.image_path));
        CHECK(slurp(d1 + "/" + e.voxel_path) == slurp(d2 + "/" + e.voxel_path));
    }
    // manifest reader round-trips
    std::vector<ManifestEntry> back = read_manifest(d1 + "/manifest.txt");
    REQUIRE(back.size() == m1.size());
    CHECK(back[5].id == m1[5].id);
    CHECK(back[5].split == m1[5].split);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("voxel file roundtrips are bit-exact; corrupt files are format errors") {
    std::string dir = tmp_dir();
    Rng rng = Rng::stream(92, "vox");
    VoxelGrid g(32, VoxelGrid::Kind::Binary);
    for (float& v : g.values) v = rng.next_double() < 0.5 ? 1.f : 0.f;
    std::string path = dir + "/a.rvox";
    save_voxels(path, g);
    VoxelGrid back = load_voxels(path);
    CHECK(back.kind == VoxelGrid::Kind::Binary);
    CHECK(back.side == 32);
    CHECK(back.values == g.values);
    // saving again produces identical bytes
    std::string bytes1 = slurp(path);
    save_voxels(path, back);
    CHECK(slurp(path) == bytes1);

    VoxelGrid p(16, VoxelGrid::Kind::Probability);
    for (float& v : p.values) v = float(rng.next_double());
    std::string fpath = dir + "/p.rvox";
    save_voxels(fpath, p);
    VoxelGrid pback = load_voxels(fpath);
    CHECK(pback.kind == VoxelGrid::Kind::Probability);
    CHECK(pback.values == p.values);

    // truncation: drop the last 10 bytes
    std::string full = slurp(path);
    std::ofstream trunc(dir + "/t.rvox", std::ios::binary);
    trunc.write(full.data(), std::streamsize(full.size() - 10));
    trunc.close();
    CHECK_THROWS_WITH_AS(load_voxels(dir + "/t.rvox"), doctest::Contains("truncated"), FormatError);

    std::ofstream bad(dir + "/b.rvox", std::ios::binary);
    bad << "NOTRVOX000000000000000";
    bad.close();
    CHECK_THROWS_WITH_AS(load_voxels(dir + "/b.rvox"), doctest::Contains("magic"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("image roundtrip preserves every byte") {
    std::string dir = tmp_dir();
    Rng rng = Rng::stream(93, "img");
    Image img(32);
    for (float& v : img.values) v = float(rng.next_double());
    std::string path = dir + "/i.ppm";
    save_image(path, img);
    std::string bytes1 = slurp(path);
    Image back = load_image(path);
    save_image(path, back);
    CHECK(slurp(path) == bytes1);
    fs::remove_all(dir);
}

TEST_CASE("obj export: cube topology, dedup, empty grid") {
    std::string dir = tmp_dir();
    VoxelGrid one(32, VoxelGrid::Kind::Binary);
    one.at(3, 4, 5) = 1.f;
    export_obj(dir + "/one.obj", one, false);
    ObjStats st = obj_stats(dir + "/one.obj");
    CHECK(st.vertices == 8);
    CHECK(st.faces == 12);

    VoxelGrid empty(32, VoxelGrid::Kind::Binary);
    export_obj(dir + "/empty.obj", empty, false);
    st = obj_stats(dir + "/empty.obj");
    CHECK(st.vertices == 0);
    CHECK(st.faces == 0);

    VoxelGrid pair(32, VoxelGrid::Kind::Binary);
    pair.at(3, 4, 5) = 1.f;
    pair.at(4, 4, 5) = 1.f;
    export_obj(dir + "/pair.obj", pair, false);
    CHECK(obj_stats(dir + "/pair.obj").vertices == 16);  // 8 x occupied, dedup off
    export_obj(dir + "/pair_d.obj", pair, true);
    CHECK(obj_stats(dir + "/pair_d.obj").vertices == 12);  // 4 shared corners
    CHECK(obj_stats(dir + "/pair_d.obj").faces == 24);
    fs::remove_all(dir);
}

TEST_CASE("loss curve records and svg plot") {
    std::string dir = tmp_dir();
    std::vector<LossRecord> recs{{0, 0.9, 10.0}, {1, 0.7, 11.5}, {2, 0.65, 12.0}};
    write_loss_curve(dir + "/loss.txt", recs);
    std::vector<LossRecord> back = read_loss_curve(dir + "/loss.txt");
    REQUIRE(back.size() == 3);
    CHECK(back[1].step == 1);
    CHECK(back[1].loss == doctest::Approx(0.7));
    write_loss_svg(dir + "/loss.svg", back);
    std::string svg = slurp(dir + "/loss.svg");
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    fs::remove_all(dir);
}
