#pragma once

// Directional deringing.  Each 8x8 luma block gets one of eight directions
// (d * 22.5 degrees counter-clockwise from horizontal); a 7-tap conditional
// replacement filter runs along that direction, then a 5-tap one across it.
// Taps that differ from the centre by T or more are replaced by the centre,
// so edges survive while small oscillations are averaged out.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#include "dkf/dering_directions.hpp"
#include "dkf/error.hpp"
#include "dkf/image.hpp"

namespace dkf::dering {

struct DeringConfig {
  std::array<int, 3> w1 = {4, 3, 1};  // distances 1, 2, 3 along the direction
  std::array<int, 2> w2 = {5, 3};     // distances 1, 2 across it
  int shift = 4;                      // W = 16

  bool valid() const {
    const int w = 1 << shift;
    return 2 * (w1[0] + w1[1] + w1[2]) == w && 2 * (w2[0] + w2[1]) == w;
  }
};

inline int second_stage_threshold(int t) { return (t + 1) / 2; }

inline int replace(int x, int t) { return std::abs(x) < t ? x : 0; }

// taps[3] is the centre; taps[3 +- k] are at distance k.
inline int crf_line(std::span<const int, 7> taps, const DeringConfig& cfg, int t) {
  const int c = taps[3];
  int sum = 0;
  for (int k = 1; k <= 3; ++k) sum += cfg.w1[k - 1] * (replace(taps[3 - k] - c, t) + replace(taps[3 + k] - c, t));
  return c + ((sum + (1 << (cfg.shift - 1))) >> cfg.shift);
}

inline int crf_line5(std::span<const int, 5> taps, const DeringConfig& cfg, int t) {
  const int c = taps[2];
  int sum = 0;
  for (int k = 1; k <= 2; ++k) sum += cfg.w2[k - 1] * (replace(taps[2 - k] - c, t) + replace(taps[2 + k] - c, t));
  return c + ((sum + (1 << (cfg.shift - 1))) >> cfg.shift);
}

// Second stage runs vertically for directions within 45 degrees of
// horizontal (0, 22.5, 45, 135, 157.5) and horizontally otherwise.
inline bool second_stage_vertical(int d) { return d <= 2 || d >= 6; }

// ---------------------------------------------------------------------------
// Direction search

struct Direction {
  int d = 0;
  // (worst - best) residual variance over the block, sample^2 units.
  double contrast = 0;
};

// Pixels of the 8x8 block at (x0, y0), border-replicated.
inline Direction find_direction(const Plane<std::uint8_t>& p, int x0, int y0) {
  std::array<std::int64_t, 8> score{};
  for (int d = 0; d < 8; ++d) {
    std::array<std::int64_t, kLinesPerDirection> sum{}, count{};
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const int line = kDirectionLine[d][y][x];
        sum[line] += p.clamped(x0 + x, y0 + y);
        ++count[line];
      }
    }
    // Sum over lines of S^2 / n, scaled by lcm(1..8) = 840 to stay integral.
    std::int64_t s = 0;
    for (int l = 0; l < kLinesPerDirection; ++l)
      if (count[l]) s += sum[l] * sum[l] * (840 / count[l]);
    score[d] = s;
  }
  // Residual variance = sum p^2 - score / 840, so the best direction has
  // the largest score.
  Direction out;
  std::int64_t best = score[0], worst = score[0];
  for (int d = 1; d < 8; ++d) {
    if (score[d] > best) {
      best = score[d];
      out.d = d;
    }
    worst = std::min(worst, score[d]);
  }
  out.contrast = static_cast<double>(best - worst) / 840.0;
  return out;
}

// One direction per 8x8 luma block (partial blocks at the border included).
struct DirectionField {
  int cols = 0, rows = 0;
  std::vector<std::uint8_t> d;
  std::vector<double> contrast;

  int at(int bx, int by) const { return d[static_cast<std::size_t>(by) * cols + bx]; }
};

inline DirectionField compute_directions(const Plane<std::uint8_t>& luma) {
  DirectionField f;
  f.cols = (luma.width() + 7) / 8;
  f.rows = (luma.height() + 7) / 8;
  for (int by = 0; by < f.rows; ++by) {
    for (int bx = 0; bx < f.cols; ++bx) {
      const auto dir = find_direction(luma, bx * 8, by * 8);
      f.d.push_back(static_cast<std::uint8_t>(dir.d));
      f.contrast.push_back(dir.contrast);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Block and frame filtering

// Stage-1 (along-direction) output at (px, py), border-replicated.
inline int stage1_at(const Plane<std::uint8_t>& src, int px, int py, int d, const DeringConfig& cfg, int t) {
  const auto& off = kDirectionTaps[d];
  std::array<int, 7> taps;
  for (int k = -3; k <= 3; ++k) {
    const int dx = k >= 0 ? off[k][0] : -off[-k][0];
    const int dy = k >= 0 ? off[k][1] : -off[-k][1];
    taps[k + 3] = src.clamped(px + dx, py + dy);
  }
  return crf_line(taps, cfg, t);
}

// Filters the bs x bs block at (x0, y0) of `src` into `dst`.  Stage 1 covers
// the block plus a 2-sample margin, all read from `src`; stage 2 reads only
// stage-1 output.  The result depends on `src` alone.
inline void dering_block(const Plane<std::uint8_t>& src, Plane<std::uint8_t>& dst, int x0, int y0, int bs, int d,
                         const DeringConfig& cfg, int t) {
  if (t <= 0) {
    for (int y = y0; y < std::min(y0 + bs, src.height()); ++y)
      for (int x = x0; x < std::min(x0 + bs, src.width()); ++x) dst.at(x, y) = src.at(x, y);
    return;
  }
  constexpr int kMargin = 2;
  const int span = bs + 2 * kMargin;
  std::vector<int> stage1(static_cast<std::size_t>(span) * span);
  for (int y = 0; y < span; ++y)
    for (int x = 0; x < span; ++x)
      stage1[static_cast<std::size_t>(y) * span + x] = stage1_at(src, x0 + x - kMargin, y0 + y - kMargin, d, cfg, t);
  const int t2 = second_stage_threshold(t);
  const bool vertical = second_stage_vertical(d);
  for (int y = 0; y < bs; ++y) {
    for (int x = 0; x < bs; ++x) {
      const int px = x0 + x, py = y0 + y;
      if (px >= dst.width() || py >= dst.height()) continue;
      std::array<int, 5> taps;
      for (int k = -2; k <= 2; ++k) {
        const int sx = x + kMargin + (vertical ? 0 : k);
        const int sy = y + kMargin + (vertical ? k : 0);
        taps[k + 2] = stage1[static_cast<std::size_t>(sy) * span + sx];
      }
      dst.at(px, py) = static_cast<std::uint8_t>(std::clamp(crf_line5(taps, cfg, t2), 0, 255));
    }
  }
}

// Filters every superblock whose flag is set; `flags` is raster order over
// ceil(w/64) x ceil(h/64) superblocks.  Chroma uses the co-located luma
// directions and half the threshold.
inline PlanarImage dering_frame(const PlanarImage& img, std::span<const std::uint8_t> flags, int t_base,
                                const DeringConfig& cfg = {}) {
  require(cfg.valid(), "dering_frame: weights must sum to half the normalizer");
  require(t_base >= 0, "dering_frame: threshold must be non-negative");
  const int sb_cols = (img.width + 63) / 64, sb_rows = (img.height + 63) / 64;
  require(static_cast<int>(flags.size()) == sb_cols * sb_rows, "dering_frame: one flag per superblock");
  PlanarImage out = img;
  if (t_base == 0) return out;
  const DirectionField dirs = compute_directions(img.luma());
  const int sh = chroma_shift(img.subsampling);
  for (int c = 0; c < 3; ++c) {
    const int bs = c == 0 ? 8 : 8 >> sh;
    const int t = c == 0 ? t_base : t_base / 2;
    const auto& src = img.planes[c];
    auto& dst = out.planes[c];
    for (int by = 0; by < dirs.rows; ++by) {
      for (int bx = 0; bx < dirs.cols; ++bx) {
        if (!flags[static_cast<std::size_t>(by / 8) * sb_cols + bx / 8]) continue;
        if (bx * bs >= src.width() || by * bs >= src.height()) continue;
        dering_block(src, dst, bx * bs, by * bs, bs, dirs.at(bx, by), cfg, t);
      }
    }
  }
  return out;
}

// Deringing threshold for a quantizer step given in pixel units.
inline int threshold_for_step(double step_px) { return static_cast<int>(std::lround(0.67 * step_px)); }

}  // namespace dkf::dering
