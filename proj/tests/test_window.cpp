#include "doctest.h"
#include "oracles.hpp"
#include "r3ds/window.hpp"

using namespace r3ds;

namespace {

Tensor64 random_map(int b, int h, int w, int c, Rng& rng) {
    return oracle::random_tensor({b, h, w, c}, rng);
}

}  // namespace

TEST_CASE("window partition: 4x4 map, M=2 -> 4 windows, slot arithmetic") {
    int h = 4, w = 4, c = 1;
    Tensor64 fm = Tensor64::zeros({1, h, w, c});
    for (int64_t i = 0; i < 16; ++i) fm.data[size_t(i)] = double(i);  // value = y*4+x
    Tensor64 wins = window_partition<double>(nullptr, fm, 2);
    REQUIRE(wins.shape == Shape{4, 4, 1});
    // token (0,3) lands in window 1, slot 1
    CHECK(wins.at({1, 1, 0}) == 3.0);
    // token (2,1) -> window 2, slot 1
    CHECK(wins.at({2, 1, 0}) == 9.0);
}

TEST_CASE("partition/reverse and shift/unshift are bit-exact inverses") {
    Rng rng = Rng::stream(31, "roundtrip");
    for (int rep = 0; rep < 25; ++rep) {
        int M = 1 + int(rng.next_below(3));
        int h = M * int(1 + rng.next_below(3));
        int w = M * int(1 + rng.next_below(3));
        int c = 1 + int(rng.next_below(5));
        int b = 1 + int(rng.next_below(2));
        Tensor64 fm = random_map(b, h, w, c, rng);
        Tensor64 wins = window_partition<double>(nullptr, fm, M);
        Tensor64 back = window_reverse<double>(nullptr, wins, h, w, M);
        REQUIRE(back.shape == fm.shape);
        CHECK(back.data == fm.data);

        int s = int(rng.next_below(uint64_t(std::min(h, w))));
        Tensor64 sh = cyclic_shift<double>(nullptr, fm, s);
        Tensor64 un = cyclic_unshift<double>(nullptr, sh, s);
        CHECK(un.data == fm.data);
    }
}

TEST_CASE("single window degenerate case equals the flattened map") {
    Rng rng = Rng::stream(32, "single");
    Tensor64 fm = random_map(2, 3, 3, 4, rng);
    Tensor64 wins = window_partition<double>(nullptr, fm, 3);
    REQUIRE(wins.shape == Shape{2, 9, 4});
    CHECK(wins.data == fm.data);
}

TEST_CASE("cyclic shift conventions") {
    Rng rng = Rng::stream(33, "shift");
    Tensor64 fm = random_map(1, 4, 4, 1, rng);
    // s=0 is the identity
    Tensor64 s0 = cyclic_shift<double>(nullptr, fm, 0);
    CHECK(s0.data == fm.data);
    // 4x4, s=2: the token at (0,0) shows up at (2,2)
    Tensor64 s2 = cyclic_shift<double>(nullptr, fm, 2);
    CHECK(s2.at({0, 2, 2, 0}) == fm.at({0, 0, 0, 0}));
}

TEST_CASE("indivisible window dims raise a dimension error") {
    Tensor64 fm = Tensor64::zeros({1, 6, 4, 2});
    CHECK_THROWS_AS(window_partition<double>(nullptr, fm, 4), ShapeError);
}

TEST_CASE("shift mask: s=0 all zeros; single window blocks cross-region pairs") {
    Tensor64 m0 = build_shift_mask<double>(8, 8, 4, 0);
    for (double v : m0.data) CHECK(v == 0.0);

    // h=w=M single window, s=M/2: 4 region ids; blocked iff regions differ
    int M = 4, s = 2;
    Tensor64 m = build_shift_mask<double>(M, M, M, s);
    REQUIRE(m.shape == Shape{1, 1, 16, 16});
    auto region = [&](int y, int x) {
        // with h=M the first slice [0,h-M) is empty; the post-shift grid
        // splits at h-s into kept rows vs wrapped rows
        int ry = y < M - s ? 0 : 1;
        int rx = x < M - s ? 0 : 1;
        return ry * 2 + rx;
    };
    int blocked = 0;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            bool same = region(i / M, i % M) == region(j / M, j % M);
            double want = same ? 0.0 : -1e4;
            CHECK(m.data[size_t(i * 16 + j)] == want);
            blocked += !same;
            // symmetry
            CHECK(m.data[size_t(i * 16 + j)] == m.data[size_t(j * 16 + i)]);
        }
    CHECK(blocked > 0);
}

TEST_CASE("shift mask blocks exactly the wrapped pairs (8x8, M=4, s=2)") {
    // independent criterion: a pair may attend iff the offset of the two
    // tokens' pre-shift positions equals their in-window offset
    const int h = 8, w = 8, M = 4, s = 2;
    Tensor64 m = build_shift_mask<double>(h, w, M, s);
    REQUIRE(m.shape == Shape{4, 1, 16, 16});
    int blocked_total = 0;
    for (int wy = 0; wy < 2; ++wy)
        for (int wx = 0; wx < 2; ++wx) {
            int64_t wi = wy * 2 + wx;
            for (int i = 0; i < 16; ++i)
                for (int j = 0; j < 16; ++j) {
                    int y = wy * M + i / M, x = wx * M + i % M;
                    int yy = wy * M + j / M, xx = wx * M + j % M;
                    bool adj = ((y + s) % h - (yy + s) % h == y - yy) &&
                               ((x + s) % w - (xx + s) % w == x - xx);
                    CHECK(m.at({wi, 0, i, j}) == (adj ? 0.0 : -1e4));
                    blocked_total += !adj;
                }
        }
    // the window away from the wrap seam is fully unmasked
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) CHECK(m.at({0, 0, i, j}) == 0.0);
    CHECK(blocked_total > 0);
}

TEST_CASE("patch merging gather order matches the indexing oracle") {
    Rng rng = Rng::stream(34, "merge");
    int h = 6, w = 4, c = 3;
    Tensor64 fm = random_map(2, h, w, c, rng);
    std::vector<int64_t> idx = patch_merge_indices(h, w, c);
    Tensor64 merged = gather_per_slice<double>(nullptr, fm, idx, {2, h / 2, w / 2, 4 * c});
    static const int kOrder[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t y = 0; y < h / 2; ++y)
            for (int64_t x = 0; x < w / 2; ++x)
                for (int q = 0; q < 4; ++q)
                    for (int64_t ch = 0; ch < c; ++ch)
                        CHECK(merged.at({b, y, x, q * c + ch}) ==
                              fm.at({b, 2 * y + kOrder[q][0], 2 * x + kOrder[q][1], ch}));
}

TEST_CASE("relative position index depends only on the coordinate delta") {
    int M = 4;
    std::vector<int64_t> idx = relative_position_index(M);
    int64_t T = int64_t(M) * M;
    for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j < T; ++j) {
            CHECK(idx[size_t(i * T + j)] >= 0);
            CHECK(idx[size_t(i * T + j)] < relative_table_size(M));
            for (int64_t i2 = 0; i2 < T; ++i2)
                for (int64_t j2 = 0; j2 < T; ++j2) {
                    bool same_delta = (i / M - j / M == i2 / M - j2 / M) &&
                                      (i % M - j % M == i2 % M - j2 % M);
                    if (same_delta) CHECK(idx[size_t(i * T + j)] == idx[size_t(i2 * T + j2)]);
                }
        }
}

TEST_CASE("patch embed indices pick the documented (py,px,channel) order") {
    int S = 8, p = 4;
    std::vector<int64_t> idx = patch_embed_indices(S, p);
    REQUIRE(idx.size() == size_t(3 * S * S));
    // token (gy=1, gx=0), feature (py=2, px=3, ch=1) reads image (1, 6, 3)
    int64_t token = 1 * (S / p) + 0;
    int64_t feat = (2 * p + 3) * 3 + 1;
    int64_t out_pos = token * (p * p * 3) + feat;
    CHECK(idx[size_t(out_pos)] == (int64_t(1) * S + 6) * S + 3);
}
