#pragma once

// Objective metrics, BD-rate and corpus RD sweeps.
//
// All metrics except psnr(..., kAll) look at luma only.  SSIM and FAST-SSIM
// are reported as plain scores; BD-rate converts them to dB with
// -10 log10(1 - s) before fitting so every metric is fitted on a log scale.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dkf/codec.hpp"
#include "dkf/error.hpp"
#include "dkf/image.hpp"
#include "dkf/io_media.hpp"

namespace dkf::eval {

inline constexpr double kPsnrCap = 99.0;

enum class PlaneSel { kLuma, kAll };

namespace detail {

inline void require_same_geometry(const PlanarImage& a, const PlanarImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.subsampling != b.subsampling) throw ContractError(what);
}

inline double to_db(double mse) { return mse <= 0 ? kPsnrCap : std::min(kPsnrCap, 10 * std::log10(255.0 * 255.0 / mse)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// PSNR

inline double psnr(const PlanarImage& a, const PlanarImage& b, PlaneSel sel = PlaneSel::kLuma) {
  detail::require_same_geometry(a, b, "psnr: images differ in geometry");
  double sse = 0;
  std::size_t n = 0;
  for (int c = 0; c < (sel == PlaneSel::kLuma ? 1 : 3); ++c) {
    const auto& pa = a.planes[c].samples();
    const auto& pb = b.planes[c].samples();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = static_cast<double>(pa[i]) - pb[i];
      sse += d * d;
    }
    n += pa.size();
  }
  return detail::to_db(sse / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// PSNR-HVS

// Contrast sensitivity weights for the 8x8 DCT, row-major [v][u].  Same
// constants as the public psnr-hvs-m reference code.
inline constexpr std::array<double, 64> kCsf = {
    1.608443, 2.339554, 2.573509, 1.608443, 1.072295, 0.643377, 0.504610, 0.421887,
    2.144591, 2.144591, 1.838221, 1.354478, 0.989811, 0.443708, 0.428918, 0.467911,
    1.838221, 1.979622, 1.608443, 1.072295, 0.643377, 0.451493, 0.372972, 0.459555,
    1.838221, 1.513829, 1.169777, 0.887417, 0.504610, 0.295806, 0.321689, 0.415082,
    1.429727, 1.169777, 0.695543, 0.459555, 0.378457, 0.236102, 0.249855, 0.334222,
    1.072295, 0.735288, 0.467911, 0.402111, 0.317717, 0.247453, 0.227744, 0.279729,
    0.525206, 0.402111, 0.329937, 0.295806, 0.249855, 0.212687, 0.214459, 0.254803,
    0.357432, 0.279729, 0.270896, 0.262603, 0.229778, 0.257351, 0.249855, 0.259950};

namespace detail {

// Orthonormal 8-point DCT-II basis, basis[k][n].
inline const std::array<std::array<double, 8>, 8>& dct8_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> m{};
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        m[k][n] = (k == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8)) *
                  std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
    return m;
  }();
  return basis;
}

}  // namespace detail

// Whole 8x8 tiles only; a partial right/bottom strip is ignored.
inline double psnr_hvs(const PlanarImage& a, const PlanarImage& b) {
  detail::require_same_geometry(a, b, "psnr_hvs: images differ in geometry");
  const int bw = a.width / 8, bh = a.height / 8;
  require(bw > 0 && bh > 0, "psnr_hvs: image smaller than one 8x8 tile");
  const auto& m = detail::dct8_basis();
  double total = 0;
  std::array<double, 64> diff, tmp;
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          diff[y * 8 + x] = static_cast<double>(a.luma().at(bx * 8 + x, by * 8 + y)) - b.luma().at(bx * 8 + x, by * 8 + y);
      // Rows, then columns.
      for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
          double s = 0;
          for (int x = 0; x < 8; ++x) s += m[u][x] * diff[y * 8 + x];
          tmp[y * 8 + u] = s;
        }
      double block = 0;
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          double s = 0;
          for (int y = 0; y < 8; ++y) s += m[v][y] * tmp[y * 8 + u];
          const double w = s * kCsf[v * 8 + u];
          block += w * w;
        }
      total += block / 64;
    }
  }
  return detail::to_db(total / (static_cast<double>(bw) * bh));
}

// ---------------------------------------------------------------------------
// SSIM

namespace detail {

// Summed-area table with a zero first row/column.
template <typename T>
struct Integral {
  int w = 0, h = 0;
  std::vector<T> s;
  template <typename F>
  Integral(int width, int height, F f) : w(width), h(height), s(static_cast<std::size_t>(width + 1) * (height + 1), 0) {
    for (int y = 0; y < h; ++y) {
      T row = 0;
      for (int x = 0; x < w; ++x) {
        row += f(x, y);
        s[idx(x + 1, y + 1)] = s[idx(x + 1, y)] + row;
      }
    }
  }
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w + 1) + x; }
  T box(int x, int y, int n) const { return s[idx(x + n, y + n)] - s[idx(x, y + n)] - s[idx(x + n, y)] + s[idx(x, y)]; }
};

// Mean SSIM over every n x n window position.  Sample values are in units of
// `scale` (1 for 8-bit, 4 for a 2x2 sum), which rescales C1 and C2.
template <typename P>
double box_ssim(int w, int h, const P& pa, const P& pb, int n, double scale) {
  n = std::min({n, w, h});
  using I = Integral<std::int64_t>;
  const I sa(w, h, [&](int x, int y) { return std::int64_t{pa.at(x, y)}; });
  const I sb(w, h, [&](int x, int y) { return std::int64_t{pb.at(x, y)}; });
  const I saa(w, h, [&](int x, int y) { return std::int64_t{pa.at(x, y)} * pa.at(x, y); });
  const I sbb(w, h, [&](int x, int y) { return std::int64_t{pb.at(x, y)} * pb.at(x, y); });
  const I sab(w, h, [&](int x, int y) { return std::int64_t{pa.at(x, y)} * pb.at(x, y); });
  const double c1 = std::pow(0.01 * 255 * scale, 2), c2 = std::pow(0.03 * 255 * scale, 2);
  const double nn = static_cast<double>(n) * n;
  double total = 0;
  for (int y = 0; y + n <= h; ++y) {
    for (int x = 0; x + n <= w; ++x) {
      const double ma = sa.box(x, y, n) / nn, mb = sb.box(x, y, n) / nn;
      const double va = saa.box(x, y, n) / nn - ma * ma;
      const double vb = sbb.box(x, y, n) / nn - mb * mb;
      const double cov = sab.box(x, y, n) / nn - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / (static_cast<double>(w - n + 1) * (h - n + 1));
}

// 2x2 box sums (0..1020), border-replicated for odd sizes.
inline Plane<std::int32_t> downsample_sum(const Plane<std::uint8_t>& p) {
  Plane<std::int32_t> out((p.width() + 1) / 2, (p.height() + 1) / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out.at(x, y) = p.clamped(2 * x, 2 * y) + p.clamped(2 * x + 1, 2 * y) + p.clamped(2 * x, 2 * y + 1) +
                     p.clamped(2 * x + 1, 2 * y + 1);
  return out;
}

}  // namespace detail

inline double ssim(const PlanarImage& a, const PlanarImage& b) {
  detail::require_same_geometry(a, b, "ssim: images differ in geometry");
  return detail::box_ssim(a.width, a.height, a.luma(), b.luma(), 8, 1.0);
}

// SSIM on the 2x-downsampled planes with a 4x4 window, i.e. the same 8x8
// footprint at a quarter of the work; every moment is an exact integer.
inline double fast_ssim(const PlanarImage& a, const PlanarImage& b) {
  detail::require_same_geometry(a, b, "fast_ssim: images differ in geometry");
  const auto da = detail::downsample_sum(a.luma());
  const auto db = detail::downsample_sum(b.luma());
  return detail::box_ssim(da.width(), da.height(), da, db, 4, 4.0);
}

struct Metrics {
  double psnr = 0, psnr_hvs = 0, ssim = 0, fast_ssim = 0;
};

inline Metrics all_metrics(const PlanarImage& a, const PlanarImage& b) {
  return {psnr(a, b), psnr_hvs(a, b), ssim(a, b), fast_ssim(a, b)};
}

// ---------------------------------------------------------------------------
// RD curves

inline const std::array<std::string, 4>& metric_names() {
  static const std::array<std::string, 4> names = {"psnr", "psnr_hvs", "ssim", "fast_ssim"};
  return names;
}

struct RdPoint {
  double bpp = 0;
  std::map<std::string, double> metrics;
};

struct RdCurve {
  std::string name;
  std::vector<RdPoint> points;  // ascending bpp

  void sort() {
    std::stable_sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
  }
};

struct Band {
  double lo = 0, hi = 0;
};

// Rate bands in bits per pixel.
inline constexpr Band kLowBand{0.05, 0.2};
inline constexpr Band kMediumBand{0.2, 0.5};
inline constexpr Band kHighBand{0.5, 1.0};

inline std::optional<Band> band_by_name(const std::string& s) {
  if (s == "low") return kLowBand;
  if (s == "medium") return kMediumBand;
  if (s == "high") return kHighBand;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// BD-rate

enum class BdFit { kCubic, kPchip };

namespace detail {

inline double fit_scale(const std::string& metric, double v) {
  if (metric == "ssim" || metric == "fast_ssim") return -10 * std::log10(std::max(1e-10, 1 - v));
  return v;
}

// Least-squares cubic y(x); x is centred and scaled for conditioning.
struct Cubic {
  double x0 = 0, xs = 1;
  std::array<double, 4> c{};

  static Cubic fit(const std::vector<double>& x, const std::vector<double>& y) {
    Cubic p;
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    p.x0 = (*mn + *mx) / 2;
    p.xs = std::max((*mx - *mn) / 2, 1e-12);
    std::array<std::array<double, 5>, 4> a{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = (x[i] - p.x0) / p.xs;
      std::array<double, 4> pw = {1, t, t * t, t * t * t};
      for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) a[r][k] += pw[r] * pw[k];
        a[r][4] += pw[r] * y[i];
      }
    }
    for (int col = 0; col < 4; ++col) {
      int piv = col;
      for (int r = col + 1; r < 4; ++r)
        if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
      std::swap(a[col], a[piv]);
      if (std::abs(a[col][col]) < 1e-300) throw ContractError("bd_rate: degenerate fit");
      for (int r = 0; r < 4; ++r) {
        if (r == col) continue;
        const double f = a[r][col] / a[col][col];
        for (int k = col; k < 5; ++k) a[r][k] -= f * a[col][k];
      }
    }
    for (int k = 0; k < 4; ++k) p.c[k] = a[k][4] / a[k][k];
    return p;
  }

  // Integral of y over [lo, hi].
  double integral(double lo, double hi) const {
    auto prim = [&](double x) {
      const double t = (x - x0) / xs;
      return xs * (c[0] * t + c[1] * t * t / 2 + c[2] * t * t * t / 3 + c[3] * t * t * t * t / 4);
    };
    return prim(hi) - prim(lo);
  }
};

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
struct Pchip {
  std::vector<double> x, y, d;

  static Pchip fit(std::vector<double> xs, std::vector<double> ys) {
    Pchip p;
    p.x = std::move(xs);
    p.y = std::move(ys);
    const std::size_t n = p.x.size();
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = p.x[i + 1] - p.x[i];
      delta[i] = (p.y[i + 1] - p.y[i]) / h[i];
    }
    p.d.assign(n, 0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0) continue;
      const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
      p.d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
      double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (s * d0 <= 0) s = 0;
      else if (d0 * d1 <= 0 && std::abs(s) > std::abs(3 * d0)) s = 3 * d0;
      return s;
    };
    if (n == 2) {
      p.d[0] = p.d[1] = delta[0];
    } else {
      p.d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
      p.d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    return p;
  }

  double integral(double lo, double hi) const {
    double total = 0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      const double a = std::max(lo, x[i]), b = std::min(hi, x[i + 1]);
      if (b <= a) continue;
      // Exact integral of the Hermite cubic over [a, b] via Simpson's rule
      // (exact for cubics).
      auto eval = [&](double t) {
        const double h = x[i + 1] - x[i], s = (t - x[i]) / h;
        const double h00 = 2 * s * s * s - 3 * s * s + 1, h10 = s * s * s - 2 * s * s + s;
        const double h01 = -2 * s * s * s + 3 * s * s, h11 = s * s * s - s * s;
        return h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1];
      };
      total += (b - a) / 6 * (eval(a) + 4 * eval((a + b) / 2) + eval(b));
    }
    return total;
  }
};

struct Prepared {
  std::vector<double> metric, log_rate;  // ascending metric
};

inline Prepared prepare(const RdCurve& c, const std::string& metric, std::vector<std::string>* warnings) {
  if (c.points.size() < 4) throw ContractError("bd_rate: each curve needs at least 4 points");
  RdCurve s = c;
  s.sort();
  Prepared p;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto it = s.points[i].metrics.find(metric);
    if (it == s.points[i].metrics.end()) throw ContractError("bd_rate: curve lacks metric " + metric);
    if (!(s.points[i].bpp > 0)) throw ContractError("bd_rate: bpp must be positive");
    p.metric.push_back(fit_scale(metric, it->second));
    p.log_rate.push_back(std::log(s.points[i].bpp));
  }
  for (std::size_t i = 1; i < p.metric.size(); ++i) {
    if (p.metric[i] <= p.metric[i - 1]) {
      if (warnings) warnings->push_back("curve '" + c.name + "' is not monotone in " + metric);
      break;
    }
  }
  // Fit on points sorted by metric; ties keep the cheaper rate.
  std::vector<std::size_t> order(p.metric.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p.metric[a] < p.metric[b]; });
  Prepared out;
  for (auto i : order) {
    if (!out.metric.empty() && p.metric[i] == out.metric.back()) continue;
    out.metric.push_back(p.metric[i]);
    out.log_rate.push_back(p.log_rate[i]);
  }
  if (out.metric.size() < 2) throw ContractError("bd_rate: curve has a single distinct metric value");
  return out;
}

// Metric value on the piecewise-linear (log bpp -> metric) curve at `bpp`,
// clamped to the curve's ends.
inline double metric_at_rate(const RdCurve& c, const std::string& metric, double bpp) {
  RdCurve s = c;
  s.sort();
  const double lr = std::log(bpp);
  auto m = [&](std::size_t i) { return fit_scale(metric, s.points[i].metrics.at(metric)); };
  auto r = [&](std::size_t i) { return std::log(s.points[i].bpp); };
  if (lr <= r(0)) return m(0);
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    if (lr <= r(i)) {
      const double t = (lr - r(i - 1)) / std::max(r(i) - r(i - 1), 1e-300);
      return m(i - 1) + t * (m(i) - m(i - 1));
    }
  }
  return m(s.points.size() - 1);
}

}  // namespace detail

// Average bitrate change of `test` against `ref` at equal quality, percent.
// With `band`, the quality interval is further limited to where the
// reference curve's rate lies inside the band.
inline double bd_rate(const RdCurve& ref, const RdCurve& test, const std::string& metric,
                      BdFit fit = BdFit::kCubic, std::optional<Band> band = std::nullopt,
                      std::vector<std::string>* warnings = nullptr) {
  const auto a = detail::prepare(ref, metric, warnings);
  const auto b = detail::prepare(test, metric, warnings);
  double lo = std::max(a.metric.front(), b.metric.front());
  double hi = std::min(a.metric.back(), b.metric.back());
  if (band) {
    lo = std::max(lo, detail::metric_at_rate(ref, metric, band->lo));
    hi = std::min(hi, detail::metric_at_rate(ref, metric, band->hi));
  }
  if (!(hi > lo)) throw NoOverlapError("bd_rate: curves share no " + metric + " interval");
  double ia, ib;
  if (fit == BdFit::kCubic) {
    ia = detail::Cubic::fit(a.metric, a.log_rate).integral(lo, hi);
    ib = detail::Cubic::fit(b.metric, b.log_rate).integral(lo, hi);
  } else {
    ia = detail::Pchip::fit(a.metric, a.log_rate).integral(lo, hi);
    ib = detail::Pchip::fit(b.metric, b.log_rate).integral(lo, hi);
  }
  return (std::exp((ib - ia) / (hi - lo)) - 1) * 100;
}

// ---------------------------------------------------------------------------
// Tables

struct SweepRow {
  std::string image;
  int q = 0;
  double bpp = 0;
  Metrics m;
  std::size_t bytes = 0;
};

inline constexpr const char* kCsvHeader = "image,q,bpp,psnr,psnr_hvs,ssim,fast_ssim,bytes";

inline std::string format_rows(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.4f,%.4f,%.6f,%.6f,%zu\n", r.image.c_str(), r.q, r.bpp, r.m.psnr,
                  r.m.psnr_hvs, r.m.ssim, r.m.fast_ssim, r.bytes);
    out << buf;
  }
  return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, int line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline bool skip_line(const std::string& l) {
  const auto b = l.find_first_not_of(" \t\r");
  return b == std::string::npos || l[b] == '#';
}

}  // namespace detail

inline std::vector<SweepRow> parse_rows(const std::vector<std::string>& lines) {
  std::vector<SweepRow> rows;
  bool header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int no = static_cast<int>(i + 1);
    if (detail::skip_line(lines[i])) continue;
    const auto cells = detail::split_csv(lines[i]);
    if (!header) {
      std::string h = lines[i];
      if (!h.empty() && h.back() == '\r') h.pop_back();
      if (h != kCsvHeader) throw ParseError("line " + std::to_string(no) + ": expected header '" + kCsvHeader + "'");
      header = true;
      continue;
    }
    if (cells.size() != 8) throw ParseError("line " + std::to_string(no) + ": expected 8 fields");
    SweepRow r;
    r.image = cells[0];
    r.q = static_cast<int>(detail::parse_number(cells[1], no));
    r.bpp = detail::parse_number(cells[2], no);
    r.m = {detail::parse_number(cells[3], no), detail::parse_number(cells[4], no), detail::parse_number(cells[5], no),
           detail::parse_number(cells[6], no)};
    r.bytes = static_cast<std::size_t>(detail::parse_number(cells[7], no));
    if (!(r.bpp > 0)) throw ParseError("line " + std::to_string(no) + ": bpp must be positive");
    rows.push_back(std::move(r));
  }
  if (!header) throw ParseError("line 1: missing header");
  return rows;
}

// Per-q mean of bpp and of every metric across images.
inline RdCurve aggregate(const std::vector<SweepRow>& rows, const std::string& name = "") {
  std::map<int, std::pair<RdPoint, int>> by_q;
  for (const auto& r : rows) {
    auto& [pt, n] = by_q[r.q];
    pt.bpp += r.bpp;
    pt.metrics["psnr"] += r.m.psnr;
    pt.metrics["psnr_hvs"] += r.m.psnr_hvs;
    pt.metrics["ssim"] += r.m.ssim;
    pt.metrics["fast_ssim"] += r.m.fast_ssim;
    ++n;
  }
  RdCurve c;
  c.name = name;
  for (auto& [q, pn] : by_q) {
    auto& [pt, n] = pn;
    pt.bpp /= n;
    for (auto& [k, v] : pt.metrics) v /= n;
    c.points.push_back(pt);
  }
  c.sort();
  return c;
}

// External results: a header row naming the columns (one must be "bpp",
// the rest are metric names), then one numeric row per point.  Blank lines
// and '#' comments are skipped.
inline RdCurve parse_external_curve(const std::vector<std::string>& lines, const std::string& name = "") {
  std::vector<std::string> cols;
  int bpp_col = -1;
  RdCurve c;
  c.name = name;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int no = static_cast<int>(i + 1);
    if (detail::skip_line(lines[i])) continue;
    const auto cells = detail::split_csv(lines[i]);
    if (cols.empty()) {
      cols = cells;
      for (std::size_t k = 0; k < cols.size(); ++k)
        if (cols[k] == "bpp") bpp_col = static_cast<int>(k);
      if (bpp_col < 0 || cols.size() < 2) throw ParseError("line " + std::to_string(no) + ": header needs bpp and a metric");
      continue;
    }
    if (cells.size() != cols.size())
      throw ParseError("line " + std::to_string(no) + ": expected " + std::to_string(cols.size()) + " fields");
    RdPoint p;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double v = detail::parse_number(cells[k], no);
      if (static_cast<int>(k) == bpp_col) p.bpp = v;
      else p.metrics[cols[k]] = v;
    }
    if (!(p.bpp > 0)) throw ParseError("line " + std::to_string(no) + ": bpp must be positive");
    c.points.push_back(std::move(p));
  }
  if (cols.empty()) throw ParseError("line 1: missing header");
  c.sort();
  return c;
}

inline RdCurve import_external_curve(const std::string& path) {
  return parse_external_curve(detail::read_lines(path), path);
}

// Either an rd-sweep table (aggregated per q) or an external curve file.
inline RdCurve load_curve(const std::string& path) {
  const auto lines = detail::read_lines(path);
  for (const auto& l : lines) {
    if (detail::skip_line(l)) continue;
    if (l.rfind("image,q,", 0) == 0) return aggregate(parse_rows(lines), path);
    break;
  }
  return parse_external_curve(lines, path);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepFailure {
  std::string image;
  std::string message;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ordered by (image, q) as given
  std::vector<SweepFailure> failures;
  RdCurve curve;
};

struct SweepInput {
  std::string name;
  PlanarImage image;
};

inline SweepRow measure(const SweepInput& in, int q, const codec::EncoderConfig& base) {
  codec::EncoderConfig cfg = base;
  cfg.base_q = q;
  const auto bytes = codec::encode_keyframe(in.image, cfg);
  const auto dec = codec::decode_keyframe(bytes);
  SweepRow r;
  r.image = in.name;
  r.q = q;
  r.bytes = bytes.size();
  r.bpp = 8.0 * static_cast<double>(bytes.size()) / (static_cast<double>(in.image.width) * in.image.height);
  r.m = all_metrics(in.image, dec);
  return r;
}

inline SweepResult rd_sweep(const std::vector<SweepInput>& corpus, const std::vector<int>& qs,
                            const codec::EncoderConfig& cfg, int jobs = 1) {
  require(!corpus.empty(), "rd_sweep: empty corpus");
  require(!qs.empty(), "rd_sweep: empty q list");
  const std::size_t n = corpus.size() * qs.size();
  std::vector<std::optional<SweepRow>> slots(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        slots[i] = measure(corpus[i / qs.size()], qs[i % qs.size()], cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, 256);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult res;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) res.rows.push_back(*slots[i]);
    else res.failures.push_back({corpus[i / qs.size()].name, errors[i]});
  }
  res.curve = aggregate(res.rows);
  return res;
}

// Loads every .y4m/.png under `dir` (sorted by name).  Unreadable files are
// reported in `failures` and skipped.
inline std::vector<SweepInput> load_corpus(const std::string& dir, std::vector<SweepFailure>* failures = nullptr) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("corpus directory '" + dir + "' not found");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".y4m" || ext == ".png" || ext == ".PNG")) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SweepInput> out;
  for (const auto& p : paths) {
    try {
      out.push_back({p.filename().string(), read_image(p.string())});
    } catch (const Error& e) {
      if (failures) failures->push_back({p.filename().string(), e.what()});
    }
  }
  return out;
}

// Curves restricted to the points whose bpp lies in `band` (for reporting).
inline RdCurve filter_band(const RdCurve& c, Band band) {
  RdCurve out;
  out.name = c.name;
  for (const auto& p : c.points)
    if (p.bpp >= band.lo && p.bpp <= band.hi) out.points.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Plot

inline std::string rd_plot_svg(const std::vector<RdCurve>& curves, const std::string& metric) {
  constexpr int kW = 640, kH = 420, kL = 60, kR = 20, kT = 20, kB = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      const auto it = p.metrics.find(metric);
      if (it == p.metrics.end()) continue;
      x0 = std::min(x0, p.bpp);
      x1 = std::max(x1, p.bpp);
      y0 = std::min(y0, it->second);
      y1 = std::max(y1, it->second);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return kL + (v - x0) / (x1 - x0) * (kW - kL - kR); };
  auto py = [&](double v) { return kH - kB - (v - y0) / (y1 - y0) * (kH - kT - kB); };
  static const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream s;
  char buf[160];
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<path d=\"M%d %d V%d H%d\" stroke=\"black\" fill=\"none\"/>\n", kL, kT, kH - kB, kW - kR);
  s << buf;
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%d\" font-size=\"11\" text-anchor=\"middle\">%.3g</text>\n",
                  px(xv), kH - kB + 16, xv);
    s << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.3g</text>\n",
                  kL - 6, py(yv) + 4, yv);
    s << buf;
  }
  s << "<text x=\"" << (kW + kL) / 2 << "\" y=\"" << kH - 12 << "\" font-size=\"12\" text-anchor=\"middle\">bits/pixel</text>\n";
  s << "<text x=\"14\" y=\"" << kH / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << kH / 2
    << ")\" text-anchor=\"middle\">" << metric << "</text>\n";
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const char* col = kColours[ci % 6];
    s << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[ci].points) {
      const auto it = p.metrics.find(metric);
      if (it == p.metrics.end()) continue;
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(p.bpp), py(it->second));
      s << buf;
    }
    s << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%zu\" font-size=\"12\" fill=\"%s\">", kL + 10,
                  kT + 14 + 16 * ci, col);
    s << buf;
    for (char ch : curves[ci].name) {
      if (ch == '<') s << "&lt;";
      else if (ch == '>') s << "&gt;";
      else if (ch == '&') s << "&amp;";
      else s << ch;
    }
    s << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace dkf::eval
