#pragma once
#include <vector>

namespace r3ds {

// Planar RGB image in [0,1]: values laid out (channel, row, col), side x side.
struct Image {
    int side = 0;
    std::vector<float> values;

    Image() = default;
    explicit Image(int side_) : side(side_), values(3u * size_t(side_) * size_t(side_), 0.f) {}

    float at(int c, int row, int col) const {
        return values[(size_t(c) * size_t(side) + size_t(row)) * size_t(side) + size_t(col)];
    }
    float& at(int c, int row, int col) {
        return values[(size_t(c) * size_t(side) + size_t(row)) * size_t(side) + size_t(col)];
    }
};

}  // namespace r3ds
