#pragma once

// Transforms: orthonormal 2-D DCT-II for 4..64 points, the 4-point lapping
// pre/post filter, and the integer 2x2 Haar used for DC recursion.
//
// Coding works on int32 planes holding (pixel - 128) << kCoeffShift, i.e. 4
// fractional bits.  The DCT itself runs in double precision; the same code
// is used by encoder and decoder, so results are reproducible.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dkf/block_tree.hpp"
#include "dkf/error.hpp"
#include "dkf/image.hpp"

namespace dkf::transform {

inline constexpr int kCoeffShift = 4;

// Counts multiply and add operations issued by the instrumented kernels.
struct OpCounter {
  std::uint64_t mul = 0;
  std::uint64_t add = 0;
  std::uint64_t total() const { return mul + add; }
};

// Square block of reals, row-major; at(u, v) is column u, row v.
struct CoeffBlock {
  int size = 0;
  std::vector<double> c;

  CoeffBlock() = default;
  explicit CoeffBlock(int n) : size(n), c(static_cast<std::size_t>(n) * n, 0.0) {}

  double& at(int u, int v) { return c[static_cast<std::size_t>(v) * size + u]; }
  double at(int u, int v) const { return c[static_cast<std::size_t>(v) * size + u]; }
};

inline bool valid_size(int n) { return n == 4 || n == 8 || n == 16 || n == 32 || n == 64; }

namespace detail {

// basis[k * n + i] = c_k cos(pi (2i + 1) k / 2n)
inline const std::vector<double>& basis(int n) {
  static const std::array<std::vector<double>, 7> tables = [] {
    std::array<std::vector<double>, 7> t;
    for (int lg = 2; lg <= 6; ++lg) {
      const int m = 1 << lg;
      auto& b = t[lg];
      b.resize(static_cast<std::size_t>(m) * m);
      for (int k = 0; k < m; ++k) {
        const double ck = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
        for (int i = 0; i < m; ++i) b[k * m + i] = ck * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * m));
      }
    }
    return t;
  }();
  return tables[std::bit_width(static_cast<unsigned>(n)) - 1];
}

// out[k * out_stride] = sum_i in[i * in_stride] basis[k][i] for k < n_out.
inline void dct_1d(const double* in, int in_stride, double* out, int out_stride, int n, int n_out, OpCounter* ops) {
  const auto& b = basis(n);
  for (int k = 0; k < n_out; ++k) {
    const double* row = &b[static_cast<std::size_t>(k) * n];
    double s = 0;
    for (int i = 0; i < n; ++i) s += in[i * in_stride] * row[i];
    out[k * out_stride] = s;
  }
  if (ops) {
    ops->mul += static_cast<std::uint64_t>(n_out) * n;
    ops->add += static_cast<std::uint64_t>(n_out) * (n - 1);
  }
}

// out[i * out_stride] = sum_{k < n_in} in[k * in_stride] basis[k][i].
inline void idct_1d(const double* in, int in_stride, double* out, int out_stride, int n, int n_in) {
  const auto& b = basis(n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int k = 0; k < n_in; ++k) s += in[k * in_stride] * b[static_cast<std::size_t>(k) * n + i];
    out[i * out_stride] = s;
  }
}

inline CoeffBlock fdct_partial(const CoeffBlock& px, int keep, OpCounter* ops) {
  const int n = px.size;
  require(valid_size(n), "fdct: size must be one of 4,8,16,32,64");
  require(static_cast<int>(px.c.size()) == n * n, "fdct: block storage mismatch");
  // Rows first, keeping only the first `keep` horizontal frequencies, then
  // only those `keep` columns.
  CoeffBlock tmp(n), out(n);
  for (int v = 0; v < n; ++v) dct_1d(&px.c[static_cast<std::size_t>(v) * n], 1, &tmp.c[static_cast<std::size_t>(v) * n], 1, n, keep, ops);
  for (int u = 0; u < keep; ++u) dct_1d(&tmp.c[u], n, &out.c[u], n, n, keep, ops);
  return out;
}

}  // namespace detail

inline CoeffBlock fdct(const CoeffBlock& px, OpCounter* ops = nullptr) { return detail::fdct_partial(px, px.size, ops); }

// 64-point DCT that never computes the upper 32 frequencies of either axis.
inline CoeffBlock fdct64_lowband(const CoeffBlock& px, OpCounter* ops = nullptr) {
  require(px.size == 64, "fdct64_lowband: block must be 64x64");
  return detail::fdct_partial(px, 32, ops);
}

inline CoeffBlock idct(const CoeffBlock& cb) {
  const int n = cb.size;
  require(valid_size(n), "idct: size must be one of 4,8,16,32,64");
  CoeffBlock tmp(n), out(n);
  for (int u = 0; u < n; ++u) detail::idct_1d(&cb.c[u], n, &tmp.c[u], n, n, n);
  for (int v = 0; v < n; ++v)
    detail::idct_1d(&tmp.c[static_cast<std::size_t>(v) * n], 1, &out.c[static_cast<std::size_t>(v) * n], 1, n, n);
  return out;
}

// ---------------------------------------------------------------------------
// 4-point lapping.  v = samples [b-2, b-1 | b, b+1] around a block boundary.
// Butterfly, a scale on each odd-half term, two lifting steps, inverse
// butterfly.  Constants are in 1/64 units.  The scales are > 1 and rounded,
// so the forward map is injective and the inverse recovers it exactly.

inline constexpr int kLapS0 = 91;
inline constexpr int kLapS1 = 85;
inline constexpr int kLapP = -11;
inline constexpr int kLapQ = 36;

namespace detail {

inline std::int32_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<std::int32_t>(q);
}

// round(v * s / 64) and its exact inverse for s in (64, 128).
inline std::int32_t scale_up(std::int32_t v, int s) { return (v * s + 32) >> 6; }
inline std::int32_t scale_down(std::int32_t v, int s) {
  return floor_div(128 * static_cast<std::int64_t>(v) + s, 2 * static_cast<std::int64_t>(s));
}

}  // namespace detail

inline std::array<std::int32_t, 4> prefilter_edge(const std::array<std::int32_t, 4>& x) {
  std::int32_t t3 = x[0] - x[3];
  std::int32_t t2 = x[1] - x[2];
  std::int32_t t1 = x[1] - (t2 >> 1);
  std::int32_t t0 = x[0] - (t3 >> 1);
  t2 = detail::scale_up(t2, kLapS0);
  t3 = detail::scale_up(t3, kLapS1);
  t3 += (t2 * kLapP + 32) >> 6;
  t2 += (t3 * kLapQ + 32) >> 6;
  t0 += t3 >> 1;
  t1 += t2 >> 1;
  return {t0, t1, t1 - t2, t0 - t3};
}

inline std::array<std::int32_t, 4> postfilter_edge(const std::array<std::int32_t, 4>& y) {
  std::int32_t t0 = y[0];
  std::int32_t t1 = y[1];
  std::int32_t t2 = t1 - y[2];
  std::int32_t t3 = t0 - y[3];
  t1 -= t2 >> 1;
  t0 -= t3 >> 1;
  t2 -= (t3 * kLapQ + 32) >> 6;
  t3 -= (t2 * kLapP + 32) >> 6;
  t3 = detail::scale_down(t3, kLapS1);
  t2 = detail::scale_down(t2, kLapS0);
  const std::int32_t x1 = t1 + (t2 >> 1);
  const std::int32_t x0 = t0 + (t3 >> 1);
  return {x0, x1, x1 - t2, x0 - t3};
}

enum class LapDirection { kForward, kInverse };

namespace detail {

template <typename Fn>
inline void lap_pass(Plane<std::int32_t>& p, const BlockTree& tree, bool vertical_edges, Fn&& filter) {
  const int w = p.width(), h = p.height();
  if (vertical_edges) {
    for (int y = 0; y < h; ++y) {
      for (int x = 4; x < w; x += 4) {
        if (tree.same_leaf(x - 4, y, x, y)) continue;
        const auto out = filter({p.at(x - 2, y), p.at(x - 1, y), p.at(x, y), p.at(x + 1, y)});
        for (int i = 0; i < 4; ++i) p.at(x - 2 + i, y) = out[i];
      }
    }
  } else {
    for (int y = 4; y < h; y += 4) {
      for (int x = 0; x < w; ++x) {
        if (tree.same_leaf(x, y - 4, x, y)) continue;
        const auto out = filter({p.at(x, y - 2), p.at(x, y - 1), p.at(x, y), p.at(x, y + 1)});
        for (int i = 0; i < 4; ++i) p.at(x, y - 2 + i) = out[i];
      }
    }
  }
}

}  // namespace detail

// Laps every transform-block edge of the tree, including superblock edges;
// picture borders are left alone.  Forward: vertical edges then horizontal.
inline void apply_lapping(Plane<std::int32_t>& plane, const BlockTree& tree, LapDirection dir) {
  require(plane.width() == tree.width() && plane.height() == tree.height(), "apply_lapping: plane/tree geometry mismatch");
  require(plane.width() % 4 == 0 && plane.height() % 4 == 0, "apply_lapping: dimensions must be multiples of 4");
  if (dir == LapDirection::kForward) {
    detail::lap_pass(plane, tree, true, prefilter_edge);
    detail::lap_pass(plane, tree, false, prefilter_edge);
  } else {
    detail::lap_pass(plane, tree, false, postfilter_edge);
    detail::lap_pass(plane, tree, true, postfilter_edge);
  }
}

// ---------------------------------------------------------------------------
// 2x2 Haar on z-ordered children (a b / c d), lifting form, exactly
// invertible on integers.  Output order: DC, H (columns differ),
// V (rows differ), D.

struct HaarQuad {
  std::int32_t dc, h, v, d;
  friend bool operator==(const HaarQuad&, const HaarQuad&) = default;
};

inline HaarQuad haar_dc_forward(std::int32_t a, std::int32_t b, std::int32_t c, std::int32_t d) {
  a += c;
  d -= b;
  const std::int32_t e = (a - d) >> 1;
  b = e - b;
  c = e - c;
  a -= b;
  d += c;
  // a = DC, b = H, c = V, d = D.
  return {a, b, c, d};
}

inline std::array<std::int32_t, 4> haar_dc_inverse(const HaarQuad& q) {
  std::int32_t a = q.dc, b = q.h, c = q.v, d = q.d;
  d -= c;
  a += b;
  const std::int32_t e = (a - d) >> 1;
  b = e - b;
  c = e - c;
  d += b;
  a -= c;
  return {a, b, c, d};
}

// ---------------------------------------------------------------------------
// Plane helpers for the coding domain.

inline Plane<std::int32_t> to_coding_domain(const Plane<std::uint8_t>& p, int pad_w, int pad_h) {
  Plane<std::int32_t> out(pad_w, pad_h);
  for (int y = 0; y < pad_h; ++y)
    for (int x = 0; x < pad_w; ++x) out.at(x, y) = (static_cast<std::int32_t>(p.clamped(x, y)) - 128) * (1 << kCoeffShift);
  return out;
}

inline std::uint8_t from_coding_domain(std::int32_t v) {
  const std::int32_t r = ((v + (1 << (kCoeffShift - 1))) >> kCoeffShift) + 128;
  return static_cast<std::uint8_t>(std::clamp(r, 0, 255));
}

inline CoeffBlock load_block(const Plane<std::int32_t>& p, int x0, int y0, int n) {
  CoeffBlock b(n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) b.at(x, y) = p.at(x0 + x, y0 + y);
  return b;
}

inline void store_block(Plane<std::int32_t>& p, int x0, int y0, const CoeffBlock& b) {
  for (int y = 0; y < b.size; ++y)
    for (int x = 0; x < b.size; ++x) p.at(x0 + x, y0 + y) = static_cast<std::int32_t>(std::lround(b.at(x, y)));
}

}  // namespace dkf::transform
