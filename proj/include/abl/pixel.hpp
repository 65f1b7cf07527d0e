#pragma once

#include <array>
#include <cstddef>

namespace abl {

struct Pixel {
    std::ptrdiff_t row = 0;
    std::ptrdiff_t col = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Offset in {row-delta, col-delta} order.
struct Offset {
    int drow = 0;
    int dcol = 0;
};

/// Forward neighbourhood used for boundary detection: down, right.
inline constexpr std::array<Offset, 2> kForwardNeighbours{{{1, 0}, {0, 1}}};

/// The eight direction offsets, indexed 0..7 in this fixed order.
inline constexpr std::array<Offset, 8> kDirections{{
    {1, 0}, {-1, 0}, {0, -1}, {0, 1}, {-1, 1}, {1, 1}, {-1, -1}, {1, -1},
}};

inline constexpr Pixel operator+(Pixel p, Offset o) { return {p.row + o.drow, p.col + o.dcol}; }

}  // namespace abl
