#include "doctest.h"
#include "oracles.hpp"
#include "r3ds/metrics.hpp"

using namespace r3ds;

namespace {

VoxelGrid random_binary(int side, double density, Rng& rng) {
    VoxelGrid g(side, VoxelGrid::Kind::Binary);
    for (float& v : g.values) v = rng.next_double() < density ? 1.f : 0.f;
    return g;
}

VoxelGrid random_prob(int side, Rng& rng) {
    VoxelGrid g(side, VoxelGrid::Kind::Probability);
    for (float& v : g.values) v = float(rng.next_double());
    return g;
}

}  // namespace

TEST_CASE("voxel_iou: trivial cases and the set-enumeration oracle") {
    Rng rng = Rng::stream(71, "iou");
    VoxelGrid a = random_binary(8, 0.3, rng);
    CHECK(voxel_iou(a, a, 0.3) == 1.0);

    VoxelGrid left(8, VoxelGrid::Kind::Binary), right(8, VoxelGrid::Kind::Binary);
    left.at(0, 0, 0) = 1.f;
    right.at(7, 7, 7) = 1.f;
    CHECK(voxel_iou(left, right, 0.5) == 0.0);

    VoxelGrid empty1(8, VoxelGrid::Kind::Binary), empty2(8, VoxelGrid::Kind::Binary);
    CHECK(voxel_iou(empty1, empty2, 0.5) == 1.0);  // empty-union convention

    for (int rep = 0; rep < 50; ++rep) {
        VoxelGrid pred = random_prob(8, rng);
        VoxelGrid gt = random_binary(8, rng.uniform(0.05, 0.6), rng);
        double t = rng.uniform(0.1, 0.9);
        CHECK(voxel_iou(pred, gt, t) == oracle::iou_naive(pred, gt, t));
    }
}

TEST_CASE("voxel_iou symmetry and relabeling invariance") {
    Rng rng = Rng::stream(72, "iou-sym");
    for (int rep = 0; rep < 10; ++rep) {
        VoxelGrid a = random_binary(6, 0.4, rng), b = random_binary(6, 0.4, rng);
        CHECK(voxel_iou(a, b, 0.5) == voxel_iou(b, a, 0.5));
        // apply one fixed coordinate permutation (x,y,z) -> (z,x,y) to both
        VoxelGrid ap(6, VoxelGrid::Kind::Binary), bp(6, VoxelGrid::Kind::Binary);
        for (int z = 0; z < 6; ++z)
            for (int y = 0; y < 6; ++y)
                for (int x = 0; x < 6; ++x) {
                    ap.at(z, x, y) = a.at(x, y, z);
                    bp.at(z, x, y) = b.at(x, y, z);
                }
        CHECK(voxel_iou(ap, bp, 0.5) == voxel_iou(a, b, 0.5));
    }
}

TEST_CASE("surface_points: single voxel, solid block shell, neighbor-scan oracle") {
    VoxelGrid one(32, VoxelGrid::Kind::Binary);
    one.at(5, 6, 7) = 1.f;
    auto pts = surface_points(one);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].x == doctest::Approx((5 + 0.5) / 32));
    CHECK(pts[0].y == doctest::Approx((6 + 0.5) / 32));
    CHECK(pts[0].z == doctest::Approx((7 + 0.5) / 32));

    VoxelGrid solid(32, VoxelGrid::Kind::Binary);
    for (float& v : solid.values) v = 1.f;
    CHECK(surface_points(solid).size() == size_t(32 * 32 * 32 - 30 * 30 * 30));

    Rng rng = Rng::stream(73, "surf");
    for (int rep = 0; rep < 10; ++rep) {
        VoxelGrid g = random_binary(8, 0.25, rng);
        auto got = surface_points(g);
        auto want = oracle::surface_naive(g);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].x == want[i].x);
            CHECK(got[i].y == want[i].y);
            CHECK(got[i].z == want[i].z);
        }
    }
}

TEST_CASE("fscore: trivial cases, swap symmetry, all-pairs oracle") {
    Rng rng = Rng::stream(74, "fs");
    VoxelGrid a = random_binary(8, 0.3, rng);
    CHECK(fscore(a, a, 0.5, 0.01) == 1.0);

    VoxelGrid empty1(8, VoxelGrid::Kind::Binary), empty2(8, VoxelGrid::Kind::Binary);
    CHECK(fscore(empty1, empty2, 0.5, 0.01) == 1.0);
    CHECK(fscore(a, empty1, 0.5, 0.01) == 0.0);

    for (int rep = 0; rep < 40; ++rep) {
        VoxelGrid pred = random_prob(8, rng);
        VoxelGrid gt = random_binary(8, rng.uniform(0.1, 0.5), rng);
        double t = rng.uniform(0.2, 0.8);
        double d = rng.uniform(0.01, 0.4);
        double got = fscore(pred, gt, t, d);
        double want = oracle::fscore_naive(pred, gt, t, d);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
        // P and R swap, F unchanged
        CHECK(fscore(gt, pred.binarized(float(t)), 0.5, d) == doctest::Approx(got).epsilon(1e-9));
    }
}

TEST_CASE("binarized set shrinks monotonically in the threshold") {
    Rng rng = Rng::stream(75, "mono");
    VoxelGrid pred = random_prob(8, rng);
    int64_t prev = pred.binarized(0.0f).count_occupied();
    for (double t : {0.2, 0.4, 0.6, 0.8}) {
        int64_t cur = pred.binarized(float(t)).count_occupied();
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("dice value on grids and report statistics") {
    Rng rng = Rng::stream(76, "rep");
    VoxelGrid g = random_binary(8, 0.4, rng);
    CHECK(dice_loss_value(g, g) == doctest::Approx(0.0).epsilon(1e-6));

    MetricReport rep;
    rep.samples = {{"a", 0.5, 0.25}, {"b", 0.7, 0.35}, {"c", 0.9, 0.45}};
    CHECK(rep.mean_iou() == doctest::Approx((0.5 + 0.7 + 0.9) / 3).epsilon(1e-12));
    CHECK(rep.mean_fscore() == doctest::Approx(0.35).epsilon(1e-12));
    std::string table = rep.table();
    CHECK(table.find("mean") != std::string::npos);
    std::string recs = rep.records();
    CHECK(recs.find("b 0.7 0.35") != std::string::npos);
}
