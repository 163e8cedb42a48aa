#!/usr/bin/env python3
"""Writes include/dkf/dering_directions.hpp.

Direction d is d * 22.5 degrees counter-clockwise from horizontal, image
rows growing downward.  Within 45 degrees of horizontal a line steps one
column at a time; otherwise it steps one row at a time.
"""
import math
import sys


def rnd(v):
    return math.floor(v + 0.5)


def horizontal_major(d):
    return d in (0, 1, 2, 6, 7)


def taps(d):
    a = math.radians(22.5 * d)
    out = []
    for k in range(4):
        if horizontal_major(d):
            out.append((k, -rnd(k * math.tan(a))))
        else:
            out.append((rnd(k / math.tan(a)), -k))
    return out


def lines(d):
    a = math.radians(22.5 * d)
    ids = [[0] * 8 for _ in range(8)]
    for y in range(8):
        for x in range(8):
            if horizontal_major(d):
                ids[y][x] = y + rnd(x * math.tan(a))
            else:
                ids[y][x] = x + rnd(y / math.tan(a))
    lo = min(min(r) for r in ids)
    return [[v - lo for v in r] for r in ids]


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "include/dkf/dering_directions.hpp"
    all_lines = [lines(d) for d in range(8)]
    count = max(max(max(r) for r in ls) for ls in all_lines) + 1
    o = ["#pragma once", "", "// Generated by tools/gen_dering_directions.py; do not edit.", "",
         "#include <array>", "", "namespace dkf::dering {", "",
         f"inline constexpr int kLinesPerDirection = {count};", "",
         "// kDirectionTaps[d][k] = (dx, dy) of the tap at distance k >= 0.",
         "inline constexpr std::array<std::array<std::array<int, 2>, 4>, 8> kDirectionTaps = {{"]
    for d in range(8):
        o.append("    {{" + ", ".join(f"{{{dx}, {dy}}}" for dx, dy in taps(d)) + f"}}}},  // {22.5 * d:g} deg")
    o += ["}};", "", "// kDirectionLine[d][y][x] = index of the line through (x, y).",
          "inline constexpr std::array<std::array<std::array<int, 8>, 8>, 8> kDirectionLine = {{"]
    for d in range(8):
        o.append("    {{")
        for r in all_lines[d]:
            o.append("        {" + ", ".join(f"{v:2d}" for v in r) + "},")
        o.append("    }},")
    o += ["}};", "", "}  // namespace dkf::dering", ""]
    with open(path, "w") as f:
        f.write("\n".join(o))


if __name__ == "__main__":
    main()
