#pragma once

// Generated by tools/gen_dering_directions.py; do not edit.

#include <array>

namespace dkf::dering {

inline constexpr int kLinesPerDirection = 15;

// kDirectionTaps[d][k] = (dx, dy) of the tap at distance k >= 0.
inline constexpr std::array<std::array<std::array<int, 2>, 4>, 8> kDirectionTaps = {{
    {{{0, 0}, {1, 0}, {2, 0}, {3, 0}}},  // 0 deg
    {{{0, 0}, {1, 0}, {2, -1}, {3, -1}}},  // 22.5 deg
    {{{0, 0}, {1, -1}, {2, -2}, {3, -3}}},  // 45 deg
    {{{0, 0}, {0, -1}, {1, -2}, {1, -3}}},  // 67.5 deg
    {{{0, 0}, {0, -1}, {0, -2}, {0, -3}}},  // 90 deg
    {{{0, 0}, {0, -1}, {-1, -2}, {-1, -3}}},  // 112.5 deg
    {{{0, 0}, {1, 1}, {2, 2}, {3, 3}}},  // 135 deg
    {{{0, 0}, {1, 0}, {2, 1}, {3, 1}}},  // 157.5 deg
}};

// kDirectionLine[d][y][x] = index of the line through (x, y).
inline constexpr std::array<std::array<std::array<int, 8>, 8>, 8> kDirectionLine = {{
    {{
        { 0,  0,  0,  0,  0,  0,  0,  0},
        { 1,  1,  1,  1,  1,  1,  1,  1},
        { 2,  2,  2,  2,  2,  2,  2,  2},
        { 3,  3,  3,  3,  3,  3,  3,  3},
        { 4,  4,  4,  4,  4,  4,  4,  4},
        { 5,  5,  5,  5,  5,  5,  5,  5},
        { 6,  6,  6,  6,  6,  6,  6,  6},
        { 7,  7,  7,  7,  7,  7,  7,  7},
    }},
    {{
        { 0,  0,  1,  1,  2,  2,  2,  3},
        { 1,  1,  2,  2,  3,  3,  3,  4},
        { 2,  2,  3,  3,  4,  4,  4,  5},
        { 3,  3,  4,  4,  5,  5,  5,  6},
        { 4,  4,  5,  5,  6,  6,  6,  7},
        { 5,  5,  6,  6,  7,  7,  7,  8},
        { 6,  6,  7,  7,  8,  8,  8,  9},
        { 7,  7,  8,  8,  9,  9,  9, 10},
    }},
    {{
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 3,  4,  5,  6,  7,  8,  9, 10},
        { 4,  5,  6,  7,  8,  9, 10, 11},
        { 5,  6,  7,  8,  9, 10, 11, 12},
        { 6,  7,  8,  9, 10, 11, 12, 13},
        { 7,  8,  9, 10, 11, 12, 13, 14},
    }},
    {{
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 3,  4,  5,  6,  7,  8,  9, 10},
    }},
    {{
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
        { 0,  1,  2,  3,  4,  5,  6,  7},
    }},
    {{
        { 3,  4,  5,  6,  7,  8,  9, 10},
        { 3,  4,  5,  6,  7,  8,  9, 10},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 2,  3,  4,  5,  6,  7,  8,  9},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 1,  2,  3,  4,  5,  6,  7,  8},
        { 0,  1,  2,  3,  4,  5,  6,  7},
    }},
    {{
        { 7,  6,  5,  4,  3,  2,  1,  0},
        { 8,  7,  6,  5,  4,  3,  2,  1},
        { 9,  8,  7,  6,  5,  4,  3,  2},
        {10,  9,  8,  7,  6,  5,  4,  3},
        {11, 10,  9,  8,  7,  6,  5,  4},
        {12, 11, 10,  9,  8,  7,  6,  5},
        {13, 12, 11, 10,  9,  8,  7,  6},
        {14, 13, 12, 11, 10,  9,  8,  7},
    }},
    {{
        { 3,  3,  2,  2,  1,  1,  1,  0},
        { 4,  4,  3,  3,  2,  2,  2,  1},
        { 5,  5,  4,  4,  3,  3,  3,  2},
        { 6,  6,  5,  5,  4,  4,  4,  3},
        { 7,  7,  6,  6,  5,  5,  5,  4},
        { 8,  8,  7,  7,  6,  6,  6,  5},
        { 9,  9,  8,  8,  7,  7,  7,  6},
        {10, 10,  9,  9,  8,  8,  8,  7},
    }},
}};

}  // namespace dkf::dering
