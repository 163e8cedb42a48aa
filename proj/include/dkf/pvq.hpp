#pragma once

// Gain-shape quantization of coefficient bands.
//
// A band x is coded as a companded gain index and a pulse vector y with
// sum |y_i| = K on the unit-sphere codebook y / |y|.  With a reference r the
// band is first reflected so r lies on a coordinate axis; then the angle
// between x and r is coded and only the orthogonal residual gets pulses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "dkf/entropy.hpp"
#include "dkf/error.hpp"

namespace dkf::pvq {

using entropy::CdfTable;

// ---------------------------------------------------------------------------
// Band layout

// Zig-zag scan of an n x n block; entries are row-major indices v * n + u.
inline std::vector<int> zigzag(int n) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n) * n);
  for (int s = 0; s < 2 * n - 1; ++s) {
    if (s % 2 == 0) {
      for (int v = std::min(s, n - 1); v >= 0 && s - v < n; --v) order.push_back(v * n + (s - v));
    } else {
      for (int u = std::min(s, n - 1); u >= 0 && s - u < n; --u) order.push_back((s - u) * n + u);
    }
  }
  return order;
}

struct BandLayout {
  int size = 0;                         // block size the indices refer to
  std::vector<std::vector<int>> bands;  // row-major indices into size x size
};

namespace detail {

inline BandLayout make_layout(int n) {
  BandLayout l;
  l.size = n;
  // A 64x64 block only codes its low 32x32 quadrant.
  const int coded = n == 64 ? 32 : n;
  const auto zz = zigzag(coded);
  auto remap = [&](int idx) { return (idx / coded) * n + idx % coded; };
  const int total = coded * coded;
  std::vector<int> edges;
  if (coded == 4) {
    edges = {1, total};
  } else {
    edges = {1, total / 16, total / 4, total};
  }
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    std::vector<int> band;
    for (int i = edges[b]; i < edges[b + 1]; ++i) band.push_back(remap(zz[i]));
    l.bands.push_back(std::move(band));
  }
  return l;
}

}  // namespace detail

inline const BandLayout& band_layout(int size) {
  static const std::array<BandLayout, 7> layouts = [] {
    std::array<BandLayout, 7> a;
    for (int lg = 2; lg <= 6; ++lg) a[lg] = detail::make_layout(1 << lg);
    return a;
  }();
  require(size == 4 || size == 8 || size == 16 || size == 32 || size == 64, "band_layout: unsupported size");
  return layouts[std::bit_width(static_cast<unsigned>(size)) - 1];
}

// ---------------------------------------------------------------------------
// Shape search

namespace detail {

inline double shape_objective(std::span<const double> ax, std::span<const int> y) {
  double xy = 0, yy = 0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    xy += ax[i] * y[i];
    yy += static_cast<double>(y[i]) * y[i];
  }
  return yy > 0 ? xy / std::sqrt(yy) : 0.0;
}

// Pulses on coordinates of equal magnitude are interchangeable; give the
// larger counts to the lower indices.
inline void canonicalize_ties(std::span<const double> ax, std::vector<int>& y) {
  const std::size_t n = ax.size();
  std::vector<bool> done(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> group;
    for (std::size_t j = i; j < n; ++j)
      if (!done[j] && ax[j] == ax[i]) group.push_back(j);
    std::vector<int> vals;
    for (auto j : group) {
      vals.push_back(y[j]);
      done[j] = true;
    }
    std::sort(vals.begin(), vals.end(), std::greater<>());
    for (std::size_t k = 0; k < group.size(); ++k) y[group[k]] = vals[k];
  }
}

// Exact search for small bands.  The optimum maximizes the separable
// Lagrangian sum(2 mu' |x_i| y_i - y_i^2) for some multiplier; sweeping the
// multiplier from 0 visits the optimal vectors through single-pulse moves,
// each taken at the earliest crossing, starting from all pulses on the
// largest coordinate.
inline std::vector<int> sweep_search(std::span<const double> ax, int k) {
  const int n = static_cast<int>(ax.size());
  int m = 0;
  for (int i = 1; i < n; ++i)
    if (ax[i] > ax[m]) m = i;
  std::vector<int> y(n, 0);
  y[m] = k;
  std::vector<int> best = y;
  double best_v = shape_objective(ax, y);
  double mu = 0;
  for (int iter = 0; iter < 4 * n * k + 10; ++iter) {
    double cand_mu = 0;
    int ci = -1, ck = -1;
    for (int i = 0; i < n; ++i) {
      if (y[i] == 0) continue;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const int si = 2 * y[i] - 1, sj = 2 * y[j] + 1;
        if (si <= sj) continue;
        const double c = (ax[i] - ax[j]) / (si - sj);
        if (c < mu - 1e-12) continue;
        if (ci < 0 || c < cand_mu) {
          cand_mu = c;
          ci = i;
          ck = j;
        }
      }
    }
    if (ci < 0) break;
    mu = cand_mu;
    --y[ci];
    ++y[ck];
    const double v = shape_objective(ax, y);
    if (v > best_v * (1 + 1e-12)) {
      best_v = v;
      best = y;
    }
  }
  return best;
}

// Projection start, greedy completion, then single-pulse moves until no
// move improves the objective.
inline std::vector<int> greedy_search(std::span<const double> ax, int k) {
  const int n = static_cast<int>(ax.size());
  std::vector<int> y(n, 0);
  double sum = 0;
  for (double v : ax) sum += v;
  int placed = 0;
  if (sum > 0 && k > n / 2) {
    const double scale = (k - 1) / sum;
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(std::floor(ax[i] * scale));
      placed += y[i];
    }
  }
  double xy = 0, yy = 0;
  for (int i = 0; i < n; ++i) {
    xy += ax[i] * y[i];
    yy += static_cast<double>(y[i]) * y[i];
  }
  for (; placed < k; ++placed) {
    int best = 0;
    double best_num = -1, best_den = 1;
    for (int i = 0; i < n; ++i) {
      const double num = (xy + ax[i]) * (xy + ax[i]);
      const double den = yy + 2 * y[i] + 1;
      if (num * best_den > best_num * den) {
        best_num = num;
        best_den = den;
        best = i;
      }
    }
    xy += ax[best];
    yy += 2 * y[best] + 1;
    ++y[best];
  }
  for (int pass = 0; pass < 8; ++pass) {
    bool improved = false;
    for (int i = 0; i < n; ++i) {
      if (y[i] == 0) continue;
      for (int j = 0; j < n && y[i] > 0; ++j) {
        if (j == i) continue;
        const double nxy = xy - ax[i] + ax[j];
        const double nyy = yy - 2 * y[i] + 1 + 2 * y[j] + 1;
        if (nxy > 0 && nxy * nxy * yy > xy * xy * nyy * (1 + 1e-12)) {
          --y[i];
          ++y[j];
          xy = nxy;
          yy = nyy;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return y;
}

}  // namespace detail

// Bands up to this n*n*K use the exact sweep.
inline constexpr long kExactSearchBudget = 16384;

// Pulse vector with sum |y_i| = k maximizing x.y / |y|.  Signs follow x;
// ties go to lower indices; x == 0 puts every pulse on index 0.
inline std::vector<int> pvq_search(std::span<const double> x, int k) {
  require(k >= 0, "pvq_search: K must be non-negative");
  const int n = static_cast<int>(x.size());
  require(n >= 1, "pvq_search: empty band");
  std::vector<int> y(n, 0);
  if (k == 0) return y;
  std::vector<double> ax(n);
  bool any = false;
  for (int i = 0; i < n; ++i) {
    ax[i] = std::abs(x[i]);
    any |= ax[i] > 0;
  }
  if (!any) {
    y[0] = k;
    return y;
  }
  y = static_cast<long>(n) * n * k <= kExactSearchBudget ? detail::sweep_search(ax, k) : detail::greedy_search(ax, k);
  detail::canonicalize_ties(ax, y);
  for (int i = 0; i < n; ++i)
    if (x[i] < 0) y[i] = -y[i];
  return y;
}

// ---------------------------------------------------------------------------
// Gain companding.  The index is uniform in g^(1 - alpha), so the gain step
// at gain g grows like g^alpha: louder bands hide more quantization noise.

inline int gain_compand(double g, double q, double alpha) {
  require(g >= 0 && q > 0 && alpha >= 0 && alpha < 1, "gain_compand: need g >= 0, q > 0, 0 <= alpha < 1");
  return static_cast<int>(std::lround(std::pow(g, 1.0 - alpha) / q));
}

inline double gain_expand(int index, double q, double alpha) {
  require(index >= 0 && q > 0 && alpha >= 0 && alpha < 1, "gain_expand: bad arguments");
  return std::pow(index * q, 1.0 / (1.0 - alpha));
}

// Width of the gain cell around gain g (derivative of gain_expand).
inline double gain_cell(double g, double q, double alpha) {
  return q * std::pow(std::max(g, 1e-9), alpha) / (1.0 - alpha);
}

// ---------------------------------------------------------------------------
// Band quantization

struct PvqBand {
  int n = 0;
  int gain_index = 0;
  int k = 0;
  std::vector<int> pulses;  // n entries, or n - 1 in reference mode
  bool use_ref = false;
  int theta_index = 0;
  bool ref_flip = false;

  friend bool operator==(const PvqBand&, const PvqBand&) = default;
};

inline int pulse_count(const PvqBand& b) {
  int s = 0;
  for (int v : b.pulses) s += std::abs(v);
  return s;
}

inline bool has_energy(std::span<const double> v) {
  for (double e : v)
    if (e != 0) return true;
  return false;
}

namespace detail {

inline constexpr double kThetaMinStep = std::numbers::pi / 64;
inline constexpr double kThetaMaxStep = std::numbers::pi / 4;

// Angular step matched to the radial one: gain cell width over the gain.
inline double theta_step(double q, double alpha, double gain) {
  return std::clamp(gain_cell(gain, q, alpha) / std::max(gain, 1e-9), kThetaMinStep, kThetaMaxStep);
}

inline int theta_max_index(double step) { return static_cast<int>(std::lround(std::numbers::pi / 2 / step)); }

inline double theta_value(int index, double step) { return std::min(std::numbers::pi / 2, index * step); }

// Pulses that match the shape resolution to the gain resolution: roughly
// one gain step per coefficient along a band of n dimensions.
inline int pulses_for_gain(int gain_index, int n, double alpha) {
  if (gain_index <= 0) return 0;
  return std::max(1, static_cast<int>(std::lround(gain_index * std::sqrt((n + 3) / 2.0) * (1.0 - alpha))));
}

inline int ref_k(int gain_index, double theta, int n, double alpha) {
  const double s = gain_index * std::sin(theta);
  return std::max(0, static_cast<int>(std::lround(s * std::sqrt((n + 2) / 2.0) * (1.0 - alpha))));
}

// Householder reflection that sends r to -sign(r_m) |r| e_m.
struct Reflection {
  std::vector<double> v;
  double vv = 0;
  int axis = 0;
  double sign = 1;  // sign(r_m)

  explicit Reflection(std::span<const double> r) : v(r.begin(), r.end()) {
    const int n = static_cast<int>(r.size());
    for (int i = 1; i < n; ++i)
      if (std::abs(r[i]) > std::abs(r[axis])) axis = i;
    sign = r[axis] < 0 ? -1.0 : 1.0;
    double norm = 0;
    for (double e : r) norm += e * e;
    v[axis] += sign * std::sqrt(norm);
    for (double e : v) vv += e * e;
  }

  void apply(std::vector<double>& x) const {
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += v[i] * x[i];
    const double f = 2 * d / vv;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= f * v[i];
  }
};

inline std::vector<double> unit_shape(std::span<const int> pulses) {
  double yy = 0;
  for (int p : pulses) yy += static_cast<double>(p) * p;
  std::vector<double> u(pulses.size(), 0.0);
  if (yy > 0) {
    const double s = 1 / std::sqrt(yy);
    for (std::size_t i = 0; i < pulses.size(); ++i) u[i] = pulses[i] * s;
  }
  return u;
}

}  // namespace detail

inline std::vector<double> pvq_dequantize_band(const PvqBand& b, std::span<const double> ref, double q, double alpha) {
  std::vector<double> out(b.n, 0.0);
  if (b.gain_index == 0) return out;
  const double g = gain_expand(b.gain_index, q, alpha);
  if (!b.use_ref) {
    const auto u = detail::unit_shape(b.pulses);
    for (int i = 0; i < b.n; ++i) out[i] = g * u[i];
    return out;
  }
  require(static_cast<int>(ref.size()) == b.n && has_energy(ref), "pvq_dequantize_band: reference mode needs a reference");
  const detail::Reflection h(ref);
  const double theta = detail::theta_value(b.theta_index, detail::theta_step(q, alpha, g));
  const double dir = b.ref_flip ? h.sign : -h.sign;
  if (b.k == 0) {
    out[h.axis] = g * dir;
  } else {
    const auto u = detail::unit_shape(b.pulses);
    out[h.axis] = g * std::cos(theta) * dir;
    for (int i = 0, j = 0; i < b.n; ++i) {
      if (i == h.axis) continue;
      out[i] = g * std::sin(theta) * u[j++];
    }
  }
  h.apply(out);
  return out;
}

// Reference mode is used iff `ref` is non-empty and has energy.
inline PvqBand pvq_quantize_band(std::span<const double> x, std::span<const double> ref, double q, double alpha) {
  PvqBand b;
  b.n = static_cast<int>(x.size());
  require(b.n >= 2, "pvq_quantize_band: band too small");
  double g = 0;
  for (double e : x) g += e * e;
  g = std::sqrt(g);
  b.gain_index = gain_compand(g, q, alpha);
  b.use_ref = !ref.empty() && has_energy(ref);
  if (b.use_ref) require(static_cast<int>(ref.size()) == b.n, "pvq_quantize_band: reference size mismatch");
  if (b.gain_index == 0) {
    b.pulses.assign(b.use_ref ? b.n - 1 : b.n, 0);
    return b;
  }
  if (!b.use_ref) {
    b.k = detail::pulses_for_gain(b.gain_index, b.n, alpha);
    b.pulses = pvq_search(x, b.k);
    return b;
  }
  const double gq = gain_expand(b.gain_index, q, alpha);
  const detail::Reflection h(ref);
  std::vector<double> z(x.begin(), x.end());
  h.apply(z);
  double along = -h.sign * z[h.axis];
  if (along < 0) {
    b.ref_flip = true;
    along = -along;
  }
  const double theta = g > 0 ? std::acos(std::clamp(along / g, -1.0, 1.0)) : 0.0;
  const double step = detail::theta_step(q, alpha, gq);
  b.theta_index = std::min(detail::theta_max_index(step), static_cast<int>(std::lround(theta / step)));
  b.k = detail::ref_k(b.gain_index, detail::theta_value(b.theta_index, step), b.n, alpha);
  std::vector<double> residual;
  residual.reserve(b.n - 1);
  for (int i = 0; i < b.n; ++i)
    if (i != h.axis) residual.push_back(z[i]);
  b.pulses = pvq_search(residual, b.k);
  return b;
}

// ---------------------------------------------------------------------------
// Band binarization

inline constexpr int kMaxGainIndex = 1 << 16;

// Adaptive tables for one band context (plane, band position, ref mode).
struct BandContext {
  CdfTable gain{16};
  CdfTable gain_nibbles{6};
  std::array<CdfTable, 5> gain_digits{CdfTable(16), CdfTable(16), CdfTable(16), CdfTable(16), CdfTable(16)};
  CdfTable use_ref{2};
  CdfTable flip{2};
};

// Pulse split tables shared across bands: split of K < 15 pulses uses a
// table of K + 1 symbols, larger K a 16-bucket table per log2 class.
struct PulseContext {
  std::array<CdfTable, 15> small = [] {
    std::array<CdfTable, 15> t{};
    for (int k = 1; k < 15; ++k) t[k] = CdfTable(k + 1);
    return t;
  }();
  std::array<CdfTable, 12> large = [] {
    std::array<CdfTable, 12> t{};
    for (auto& c : t) c = CdfTable(16);
    return t;
  }();
};

namespace detail {

// Uniform integer in [0, m) with <= 16-ary symbols.
template <typename W>
void write_uint(W& w, std::uint32_t v, std::uint32_t m) {
  require(v < m, "write_uint: value out of range");
  if (m <= 1) return;
  if (m <= 16) {
    w.encode(entropy::uniform_cdf(static_cast<int>(m)), static_cast<int>(v));
    return;
  }
  const int bits = std::bit_width(m - 1);
  const int shift = bits - 4;
  write_uint(w, v >> shift, ((m - 1) >> shift) + 1);
  for (int s = shift; s > 0; s -= 4) {
    const int nb = std::min(4, s);
    w.encode(entropy::uniform_cdf(1 << nb), static_cast<int>((v >> (s - nb)) & ((1u << nb) - 1)));
  }
}

inline std::uint32_t read_uint(entropy::RangeDecoder& r, std::uint32_t m) {
  if (m <= 1) return 0;
  if (m <= 16) return static_cast<std::uint32_t>(r.decode(entropy::uniform_cdf(static_cast<int>(m))));
  const int bits = std::bit_width(m - 1);
  const int shift = bits - 4;
  std::uint32_t v = read_uint(r, ((m - 1) >> shift) + 1);
  for (int s = shift; s > 0; s -= 4) {
    const int nb = std::min(4, s);
    v = (v << nb) | static_cast<std::uint32_t>(r.decode(entropy::uniform_cdf(1 << nb)));
  }
  if (v >= m) throw FormatError("pvq: uniform value out of range");
  return v;
}

inline int bucket_class(int k) { return std::min(11, static_cast<int>(std::bit_width(static_cast<unsigned>(k))) - 4); }

template <typename W>
void write_split(W& w, PulseContext& pc, int left, int k) {
  if (k < 15) {
    w.encode_adaptive(pc.small[k], left);
    return;
  }
  // Bucket b covers [b (k+1) / 16, (b+1) (k+1) / 16).
  const int bucket = static_cast<int>((static_cast<long>(left) * 16) / (k + 1));
  w.encode_adaptive(pc.large[bucket_class(k)], bucket);
  const int lo = static_cast<int>((static_cast<long>(bucket) * (k + 1) + 15) / 16);
  const int hi = static_cast<int>((static_cast<long>(bucket + 1) * (k + 1) + 15) / 16);
  write_uint(w, static_cast<std::uint32_t>(left - lo), static_cast<std::uint32_t>(hi - lo));
}

inline int read_split(entropy::RangeDecoder& r, PulseContext& pc, int k) {
  if (k < 15) return r.decode_adaptive(pc.small[k]);
  const int bucket = r.decode_adaptive(pc.large[bucket_class(k)]);
  const int lo = static_cast<int>((static_cast<long>(bucket) * (k + 1) + 15) / 16);
  const int hi = static_cast<int>((static_cast<long>(bucket + 1) * (k + 1) + 15) / 16);
  if (hi <= lo) throw FormatError("pvq: empty pulse bucket");
  const int left = lo + static_cast<int>(read_uint(r, static_cast<std::uint32_t>(hi - lo)));
  if (left > k) throw FormatError("pvq: pulse split out of range");
  return left;
}

template <typename W>
void write_pulses(W& w, PulseContext& pc, std::span<const int> y, int k) {
  if (k == 0) return;
  if (y.size() == 1) {
    w.encode(entropy::uniform_cdf(2), y[0] < 0 ? 1 : 0);
    return;
  }
  const std::size_t half = y.size() / 2;
  int left = 0;
  for (std::size_t i = 0; i < half; ++i) left += std::abs(y[i]);
  write_split(w, pc, left, k);
  write_pulses(w, pc, y.subspan(0, half), left);
  write_pulses(w, pc, y.subspan(half), k - left);
}

inline void read_pulses(entropy::RangeDecoder& r, PulseContext& pc, std::span<int> y, int k) {
  if (k == 0) return;
  if (y.size() == 1) {
    y[0] = r.decode(entropy::uniform_cdf(2)) ? -k : k;
    return;
  }
  const std::size_t half = y.size() / 2;
  const int left = read_split(r, pc, k);
  read_pulses(r, pc, y.subspan(0, half), left);
  read_pulses(r, pc, y.subspan(half), k - left);
}

template <typename W>
void write_gain(W& w, BandContext& bc, int g) {
  w.encode_adaptive(bc.gain, std::min(g, 15));
  if (g < 15) return;
  const std::uint32_t rest = static_cast<std::uint32_t>(g - 15);
  int nibbles = 1;
  while ((rest >> (4 * nibbles)) != 0) ++nibbles;
  w.encode_adaptive(bc.gain_nibbles, nibbles - 1);
  for (int i = nibbles - 1; i >= 0; --i)
    w.encode_adaptive(bc.gain_digits[std::min(i, 4)], static_cast<int>((rest >> (4 * i)) & 15));
}

inline int read_gain(entropy::RangeDecoder& r, BandContext& bc) {
  const int first = r.decode_adaptive(bc.gain);
  if (first < 15) return first;
  const int nibbles = r.decode_adaptive(bc.gain_nibbles) + 1;
  if (nibbles > 4) throw FormatError("pvq: gain index too large");
  std::uint32_t rest = 0;
  for (int i = nibbles - 1; i >= 0; --i)
    rest = (rest << 4) | static_cast<std::uint32_t>(r.decode_adaptive(bc.gain_digits[std::min(i, 4)]));
  const std::uint32_t g = rest + 15;
  if (g > static_cast<std::uint32_t>(kMaxGainIndex)) throw FormatError("pvq: gain index too large");
  return static_cast<int>(g);
}

}  // namespace detail

// Symbol order: [use_ref flag if a reference exists] gain; if gain > 0 and
// ref mode: flip, theta; pulses (sign at each non-empty leaf).
template <typename W>
void encode_band(W& w, const PvqBand& b, bool ref_available, double q, double alpha, BandContext& bc, PulseContext& pc) {
  require(b.gain_index <= kMaxGainIndex, "encode_band: gain index too large");
  if (ref_available) w.encode_adaptive(bc.use_ref, b.use_ref ? 1 : 0);
  detail::write_gain(w, bc, b.gain_index);
  if (b.gain_index == 0) return;
  if (b.use_ref) {
    w.encode_adaptive(bc.flip, b.ref_flip ? 1 : 0);
    const double step = detail::theta_step(q, alpha, gain_expand(b.gain_index, q, alpha));
    detail::write_uint(w, static_cast<std::uint32_t>(b.theta_index),
                       static_cast<std::uint32_t>(detail::theta_max_index(step) + 1));
  }
  detail::write_pulses(w, pc, b.pulses, b.k);
}

inline PvqBand decode_band(entropy::RangeDecoder& r, int n, bool ref_available, double q, double alpha, BandContext& bc,
                           PulseContext& pc) {
  PvqBand b;
  b.n = n;
  b.use_ref = ref_available && r.decode_adaptive(bc.use_ref) == 1;
  b.gain_index = detail::read_gain(r, bc);
  b.pulses.assign(b.use_ref ? n - 1 : n, 0);
  if (b.gain_index == 0) return b;
  if (b.use_ref) {
    b.ref_flip = r.decode_adaptive(bc.flip) == 1;
    const double step = detail::theta_step(q, alpha, gain_expand(b.gain_index, q, alpha));
    b.theta_index = static_cast<int>(
        detail::read_uint(r, static_cast<std::uint32_t>(detail::theta_max_index(step) + 1)));
    b.k = detail::ref_k(b.gain_index, detail::theta_value(b.theta_index, step), n, alpha);
  } else {
    b.k = detail::pulses_for_gain(b.gain_index, n, alpha);
  }
  detail::read_pulses(r, pc, b.pulses, b.k);
  return b;
}

}  // namespace dkf::pvq
