#include "r3ds/window.hpp"

namespace r3ds {

std::vector<int64_t> window_partition_indices(int h, int w, int c, int M) {
    std::vector<int64_t> idx;
    idx.reserve(size_t(h) * size_t(w) * size_t(c));
    int nww = w / M;
    int nwh = h / M;
    for (int wy = 0; wy < nwh; ++wy)
        for (int wx = 0; wx < nww; ++wx)
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j) {
                    int y = wy * M + i, x = wx * M + j;
                    for (int ch = 0; ch < c; ++ch)
                        idx.push_back((int64_t(y) * w + x) * c + ch);
                }
    return idx;
}

std::vector<int64_t> window_reverse_indices(int h, int w, int c, int M) {
    std::vector<int64_t> idx;
    idx.reserve(size_t(h) * size_t(w) * size_t(c));
    int nww = w / M;
    int64_t t = int64_t(M) * M;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int64_t wi = int64_t(y / M) * nww + x / M;
            int64_t slot = int64_t(y % M) * M + x % M;
            for (int ch = 0; ch < c; ++ch) idx.push_back((wi * t + slot) * c + ch);
        }
    return idx;
}

std::vector<int64_t> cyclic_shift_indices(int h, int w, int c, int shift) {
    std::vector<int64_t> idx;
    idx.reserve(size_t(h) * size_t(w) * size_t(c));
    const int oy = ((shift % h) + h) % h, ox = ((shift % w) + w) % w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sy = (y + oy) % h, sx = (x + ox) % w;
            for (int ch = 0; ch < c; ++ch) idx.push_back((int64_t(sy) * w + sx) * c + ch);
        }
    return idx;
}

std::vector<int64_t> patch_merge_indices(int h, int w, int c) {
    static const int kOrder[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};  // (dy, dx)
    std::vector<int64_t> idx;
    idx.reserve(size_t(h) * size_t(w) * size_t(c));
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
            for (const auto& d : kOrder) {
                int sy = 2 * y + d[0], sx = 2 * x + d[1];
                for (int ch = 0; ch < c; ++ch) idx.push_back((int64_t(sy) * w + sx) * c + ch);
            }
    return idx;
}

std::vector<int64_t> patch_embed_indices(int image_side, int patch) {
    const int grid = image_side / patch;
    std::vector<int64_t> idx;
    idx.reserve(3u * size_t(image_side) * size_t(image_side));
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx)
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    for (int ch = 0; ch < 3; ++ch) {
                        int row = gy * patch + py, col = gx * patch + px;
                        idx.push_back((int64_t(ch) * image_side + row) * image_side + col);
                    }
    return idx;
}

std::vector<int64_t> relative_position_index(int M) {
    int64_t t = int64_t(M) * M;
    std::vector<int64_t> idx(size_t(t * t));
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < t; ++j) {
            int64_t dy = i / M - j / M, dx = i % M - j % M;
            idx[size_t(i * t + j)] = (dy + M - 1) * (2 * M - 1) + (dx + M - 1);
        }
    return idx;
}

}  // namespace r3ds
