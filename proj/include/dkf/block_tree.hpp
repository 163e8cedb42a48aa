#pragma once

// Quadtree of transform-block sizes, stored as a per-4x4-cell map of log2
// sizes.  A leaf of size s covers an s-aligned square, so two neighbouring
// cells belong to the same leaf iff they report the same size and origin.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <vector>

#include "dkf/error.hpp"
#include "dkf/image.hpp"

namespace dkf {

inline constexpr int kMinLog2 = 2;  // 4x4
inline constexpr int kMaxLog2 = 6;  // 64x64

struct Leaf {
  int x = 0, y = 0;  // pixel origin
  int size = 0;
};

class BlockTree {
 public:
  BlockTree() = default;
  // Plane of width x height pixels (multiples of sb_size) covered by
  // sb_size-sized roots, initially unsplit.
  BlockTree(int width, int height, int sb_log2 = kMaxLog2)
      : sb_log2_(sb_log2), cells_(width >> 2, height >> 2, static_cast<std::uint8_t>(sb_log2)) {
    require(sb_log2 >= kMinLog2 && sb_log2 <= kMaxLog2, "BlockTree: bad superblock size");
    require(width % (1 << sb_log2) == 0 && height % (1 << sb_log2) == 0,
            "BlockTree: dimensions must be superblock multiples");
  }

  int width() const { return cells_.width() << 2; }
  int height() const { return cells_.height() << 2; }
  int sb_size() const { return 1 << sb_log2_; }
  int sb_log2() const { return sb_log2_; }
  int sb_cols() const { return width() >> sb_log2_; }
  int sb_rows() const { return height() >> sb_log2_; }

  int log2_at(int px, int py) const { return cells_.at(px >> 2, py >> 2); }
  int size_at(int px, int py) const { return 1 << log2_at(px, py); }

  Leaf leaf_at(int px, int py) const {
    const int s = size_at(px, py);
    return {px & ~(s - 1), py & ~(s - 1), s};
  }

  bool same_leaf(int ax, int ay, int bx, int by) const {
    const Leaf a = leaf_at(ax, ay), b = leaf_at(bx, by);
    return a.x == b.x && a.y == b.y && a.size == b.size;
  }

  void set_leaf(int px, int py, int size) {
    const int lg = std::bit_width(static_cast<unsigned>(size)) - 1;
    require((1 << lg) == size && lg >= kMinLog2 && lg <= sb_log2_, "BlockTree::set_leaf: bad size");
    require(px % size == 0 && py % size == 0, "BlockTree::set_leaf: unaligned leaf");
    for (int y = py >> 2; y < (py + size) >> 2; ++y)
      for (int x = px >> 2; x < (px + size) >> 2; ++x) cells_.at(x, y) = static_cast<std::uint8_t>(lg);
  }

  // Pre-order walk of one superblock: fn(x, y, size, is_leaf) for every node.
  void visit_nodes(int sbx, int sby, const std::function<void(int, int, int, bool)>& fn) const {
    walk(sbx << sb_log2_, sby << sb_log2_, sb_size(), fn);
  }

  // Leaves of one superblock in z-order.
  std::vector<Leaf> leaves(int sbx, int sby) const {
    std::vector<Leaf> out;
    visit_nodes(sbx, sby, [&](int x, int y, int s, bool leaf) {
      if (leaf) out.push_back({x, y, s});
    });
    return out;
  }

  // Chroma tree under 4:2:0: every leaf halves, with 4x4 as the floor, so
  // four 4x4 luma leaves share one 4x4 chroma block.
  BlockTree halved() const {
    BlockTree c(width() / 2, height() / 2, sb_log2_ - 1);
    for (int y = 0; y < c.cells_.height(); ++y)
      for (int x = 0; x < c.cells_.width(); ++x)
        c.cells_.at(x, y) = static_cast<std::uint8_t>(std::max(kMinLog2, int(cells_.at(2 * x, 2 * y)) - 1));
    return c;
  }

  bool valid() const {
    for (int y = 0; y < cells_.height(); ++y) {
      for (int x = 0; x < cells_.width(); ++x) {
        const int lg = cells_.at(x, y);
        if (lg < kMinLog2 || lg > sb_log2_) return false;
        const Leaf l = leaf_at(x << 2, y << 2);
        if (l.x + l.size > width() || l.y + l.size > height()) return false;
        for (int yy = l.y >> 2; yy < (l.y + l.size) >> 2; ++yy)
          for (int xx = l.x >> 2; xx < (l.x + l.size) >> 2; ++xx)
            if (cells_.at(xx, yy) != lg) return false;
      }
    }
    return true;
  }

  friend bool operator==(const BlockTree&, const BlockTree&) = default;

 private:
  void walk(int x, int y, int s, const std::function<void(int, int, int, bool)>& fn) const {
    const bool leaf = size_at(x, y) >= s;
    fn(x, y, s, leaf);
    if (leaf) return;
    const int h = s / 2;
    walk(x, y, h, fn);
    walk(x + h, y, h, fn);
    walk(x, y + h, h, fn);
    walk(x + h, y + h, h, fn);
  }

  int sb_log2_ = kMaxLog2;
  Plane<std::uint8_t> cells_;
};

}  // namespace dkf
