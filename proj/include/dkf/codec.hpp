#pragma once

// Keyframe encoder and decoder.
//
// Per 64x64 superblock (raster order) the stream carries: luma split flags,
// then for Y, Cb, Cr in turn the superblock DC tree and every leaf's intra
// mode (luma only) and PVQ bands.  One deringing flag per superblock follows
// the last superblock.  FORMAT.md lists every symbol.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "dkf/block_tree.hpp"
#include "dkf/dering.hpp"
#include "dkf/entropy.hpp"
#include "dkf/error.hpp"
#include "dkf/image.hpp"
#include "dkf/predict.hpp"
#include "dkf/pvq.hpp"
#include "dkf/transform.hpp"

namespace dkf::codec {

using entropy::BitCounter;
using entropy::CdfTable;
using entropy::PartitionKind;
using entropy::RangeDecoder;
using entropy::RangeEncoder;
using predict::IntraMode;
using transform::CoeffBlock;

inline constexpr std::array<std::uint8_t, 4> kMagic = {'D', 'K', 'F', '1'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 13;
inline constexpr int kMaxDimension = 65535;
// Decoder refuses larger pictures so a corrupt header cannot demand
// unbounded memory.
inline constexpr std::int64_t kMaxDecodePixels = std::int64_t{1} << 24;

inline constexpr int kSbSize = 64;

// Quantizer index -> PVQ/DC step in coefficient units (samples << 4).
inline constexpr double kStepScale = 8.0;
inline constexpr double kDcStepRatio = 0.8;
inline constexpr double kLumaAlpha = 1.0 / 3.0;
inline constexpr double kChromaAlpha = 0.0;
inline constexpr double kDefaultLambdaScale = 0.2;
// Band gain (coefficient units) at which companding leaves the step at q.
inline constexpr double kMaskingGain = 512.0;

struct EncoderConfig {
  int base_q = 32;
  PartitionKind partition = PartitionKind::kReducedOverhead;
  bool dering_enabled = true;
  double lambda_scale = kDefaultLambdaScale;
};

// ---------------------------------------------------------------------------
// Header

struct Header {
  int width = 0;
  int height = 0;
  Subsampling subsampling = Subsampling::k420;
  PartitionKind partition = PartitionKind::kReducedOverhead;
  int base_q = 1;
  bool dering = true;

  std::array<std::uint8_t, kHeaderSize> serialize() const {
    std::array<std::uint8_t, kHeaderSize> b{};
    std::copy(kMagic.begin(), kMagic.end(), b.begin());
    b[4] = kVersion;
    b[5] = static_cast<std::uint8_t>(width >> 8);
    b[6] = static_cast<std::uint8_t>(width & 0xFF);
    b[7] = static_cast<std::uint8_t>(height >> 8);
    b[8] = static_cast<std::uint8_t>(height & 0xFF);
    b[9] = static_cast<std::uint8_t>(subsampling);
    b[10] = static_cast<std::uint8_t>(partition);
    b[11] = static_cast<std::uint8_t>(base_q);
    b[12] = dering ? 1 : 0;
    return b;
  }

  static Header parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) throw TruncatedStream("dkf: stream shorter than the header");
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw FormatError("dkf: bad magic");
    if (bytes[4] != kVersion) throw FormatError("dkf: unsupported version " + std::to_string(bytes[4]));
    Header h;
    h.width = (bytes[5] << 8) | bytes[6];
    h.height = (bytes[7] << 8) | bytes[8];
    if (h.width == 0 || h.height == 0) throw FormatError("dkf: zero picture dimension");
    if (bytes[9] > 1) throw FormatError("dkf: bad subsampling byte");
    if (bytes[10] > 1) throw FormatError("dkf: bad partition byte");
    if (bytes[11] == 0) throw FormatError("dkf: base_q must be >= 1");
    if (bytes[12] > 1) throw FormatError("dkf: bad dering byte");
    h.subsampling = static_cast<Subsampling>(bytes[9]);
    h.partition = static_cast<PartitionKind>(bytes[10]);
    h.base_q = bytes[11];
    h.dering = bytes[12] == 1;
    return h;
  }
};

// ---------------------------------------------------------------------------
// Quantization schedule

// Chroma is quantized more coarsely than luma at small q and more finely at
// large q; the two cross at q = 48.
inline double chroma_q_factor(int luma_q) {
  require(luma_q >= 1, "chroma_q_factor: q must be >= 1");
  const double q = luma_q;
  return 1.3 - 0.5 * q / (q + 32);
}

inline int chroma_q_map(int luma_q) {
  return std::max(1, static_cast<int>(std::lround(luma_q * chroma_q_factor(luma_q))));
}

inline double step_for_q(int q) { return q * kStepScale; }

struct Quantizer {
  int q = 1;
  double step = 0;
  double dc_step = 0;
  double alpha = 0;
  double pvq_q = 0;  // step in the companded gain domain
};

inline Quantizer plane_quantizer(int base_q, int plane) {
  Quantizer z;
  z.q = plane == 0 ? base_q : chroma_q_map(base_q);
  z.step = step_for_q(z.q);
  z.dc_step = kDcStepRatio * z.step;
  z.alpha = plane == 0 ? kLumaAlpha : kChromaAlpha;
  z.pvq_q = z.step / std::pow(kMaskingGain, z.alpha);
  return z;
}

inline double lambda_for(double lambda_scale, int base_q) {
  const double s = step_for_q(base_q);
  return lambda_scale * s * s;
}

// Deringing threshold from the luma step in pixel units.
inline int dering_threshold(int base_q) {
  return dering::threshold_for_step(step_for_q(base_q) / (1 << transform::kCoeffShift));
}

// ---------------------------------------------------------------------------
// Contexts

// Signed integer: min(|v|, 15), then for |v| >= 15 a nibble count and the
// nibbles of |v| - 15; a sign bit when v != 0.
struct MagContext {
  CdfTable head{16};
  CdfTable nibbles{8};
  CdfTable digits{16};
};

inline constexpr std::int32_t kMaxMagnitude = 1 << 24;

template <typename W>
void write_sint(W& w, MagContext& c, std::int32_t v) {
  const std::uint32_t m = static_cast<std::uint32_t>(v < 0 ? -static_cast<std::int64_t>(v) : v);
  require(m <= static_cast<std::uint32_t>(kMaxMagnitude), "write_sint: magnitude too large");
  w.encode_adaptive(c.head, static_cast<int>(std::min<std::uint32_t>(m, 15)));
  if (m >= 15) {
    const std::uint32_t rest = m - 15;
    int nb = 1;
    while (nb < 8 && (rest >> (4 * nb)) != 0) ++nb;
    w.encode_adaptive(c.nibbles, nb - 1);
    for (int i = nb - 1; i >= 0; --i) w.encode_adaptive(c.digits, static_cast<int>((rest >> (4 * i)) & 15));
  }
  if (m != 0) w.encode(entropy::uniform_cdf(2), v < 0 ? 1 : 0);
}

inline std::int32_t read_sint(RangeDecoder& r, MagContext& c) {
  std::uint32_t m = static_cast<std::uint32_t>(r.decode_adaptive(c.head));
  if (m >= 15) {
    const int nb = r.decode_adaptive(c.nibbles) + 1;
    std::uint64_t rest = 0;
    for (int i = 0; i < nb; ++i) rest = (rest << 4) | static_cast<std::uint64_t>(r.decode_adaptive(c.digits));
    if (rest + 15 > static_cast<std::uint64_t>(kMaxMagnitude)) throw FormatError("dkf: integer magnitude too large");
    m = static_cast<std::uint32_t>(rest + 15);
  }
  if (m == 0) return 0;
  return r.decode(entropy::uniform_cdf(2)) ? -static_cast<std::int32_t>(m) : static_cast<std::int32_t>(m);
}

inline int size_index(int n) { return std::bit_width(static_cast<unsigned>(n)) - 1 - kMinLog2; }

struct PlaneContexts {
  std::array<std::array<pvq::BandContext, 3>, 5> bands;  // [size_index][band]
  pvq::PulseContext pulses;
  MagContext dc_root;
  std::array<MagContext, 4> dc_detail;  // node sizes 8..64
  std::array<CdfTable, 5> intra = [] {
    std::array<CdfTable, 5> t{};
    for (auto& c : t) c = CdfTable(predict::kIntraModes);
    return t;
  }();
};

struct Contexts {
  std::array<PlaneContexts, 2> plane;  // luma, chroma (shared by Cb and Cr)
  std::array<CdfTable, 4> split;       // node sizes 8..64
  CdfTable dering{2};
};

// ---------------------------------------------------------------------------
// Geometry and per-plane reconstruction state

struct Geometry {
  int width = 0, height = 0;
  Subsampling ss = Subsampling::k420;
  int pad_w = 0, pad_h = 0;
  int sb_cols = 0, sb_rows = 0;

  Geometry(int w, int h, Subsampling s) : width(w), height(h), ss(s) {
    pad_w = (w + kSbSize - 1) / kSbSize * kSbSize;
    pad_h = (h + kSbSize - 1) / kSbSize * kSbSize;
    sb_cols = pad_w / kSbSize;
    sb_rows = pad_h / kSbSize;
  }
  int shift(int plane) const { return plane == 0 ? 0 : chroma_shift(ss); }
  int plane_w(int plane) const { return pad_w >> shift(plane); }
  int plane_h(int plane) const { return pad_h >> shift(plane); }
  int sb(int plane) const { return kSbSize >> shift(plane); }
};

// Dequantized coefficients of the current and previous superblock rows,
// stored at their block positions.  Intra and CfL never look further back.
class CoeffWindow {
 public:
  CoeffWindow() = default;
  CoeffWindow(int w, int h, int sb) : rows_(std::min(h, 2 * sb)), data_(w, rows_) {}

  CoeffBlock block(int x0, int y0, int n) const {
    CoeffBlock b(n);
    for (int v = 0; v < n; ++v)
      for (int u = 0; u < n; ++u) b.at(u, v) = data_.at(x0 + u, (y0 + v) % rows_);
    return b;
  }
  void put(int x0, int y0, const CoeffBlock& b) {
    for (int v = 0; v < b.size; ++v)
      for (int u = 0; u < b.size; ++u) data_.at(x0 + u, (y0 + v) % rows_) = b.at(u, v);
  }

 private:
  int rows_ = 1;
  Plane<double> data_;
};

struct PlaneRecon {
  BlockTree tree;
  Plane<std::int32_t> spatial;  // coding domain, before the lapping post-filter
  CoeffWindow coeffs;
  std::vector<std::int32_t> root_dc;  // per superblock, raster order
};

// Bound on reconstructed coding-domain samples; real content stays far
// inside it, corrupt streams get clamped before the integer post-filter.
inline constexpr double kSpatialLimit = 1 << 20;

inline void commit_leaf(PlaneRecon& pr, const Leaf& l, const CoeffBlock& coeffs) {
  pr.coeffs.put(l.x, l.y, coeffs);
  const CoeffBlock px = transform::idct(coeffs);
  for (int y = 0; y < l.size; ++y)
    for (int x = 0; x < l.size; ++x)
      pr.spatial.at(l.x + x, l.y + y) =
          static_cast<std::int32_t>(std::lround(std::clamp(px.at(x, y), -kSpatialLimit, kSpatialLimit)));
}

inline PlanarImage finish_planes(std::array<PlaneRecon, 3>& pr, const Geometry& g) {
  PlanarImage out(g.pad_w, g.pad_h, g.ss);
  for (int c = 0; c < 3; ++c) {
    transform::apply_lapping(pr[c].spatial, pr[c].tree, transform::LapDirection::kInverse);
    auto& dst = out.planes[c];
    for (int y = 0; y < dst.height(); ++y)
      for (int x = 0; x < dst.width(); ++x) dst.at(x, y) = transform::from_coding_domain(pr[c].spatial.at(x, y));
  }
  return out;
}

inline PlanarImage crop(const PlanarImage& img, int w, int h) {
  PlanarImage out(w, h, img.subsampling);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out.planes[c].height(); ++y)
      for (int x = 0; x < out.planes[c].width(); ++x) out.planes[c].at(x, y) = img.planes[c].at(x, y);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction shared by encoder and decoder

inline bool same_size_neighbour(const BlockTree& t, const Leaf& l, bool left) {
  if (left ? l.x == 0 : l.y == 0) return false;
  const Leaf n = left ? t.leaf_at(l.x - 1, l.y) : t.leaf_at(l.x, l.y - 1);
  return n.size == l.size && (left ? (n.y == l.y) : (n.x == l.x));
}

inline bool intra_mode_available(const BlockTree& t, const Leaf& l, IntraMode m) {
  switch (m) {
    case IntraMode::kNone:
      return true;
    case IntraMode::kHorizontal:
      return same_size_neighbour(t, l, true);
    case IntraMode::kVertical:
      return same_size_neighbour(t, l, false);
  }
  return false;
}

inline bool intra_signalled(const BlockTree& t, const Leaf& l) {
  return same_size_neighbour(t, l, true) || same_size_neighbour(t, l, false);
}

inline CoeffBlock intra_reference(const PlaneRecon& pr, const Leaf& l, IntraMode m) {
  switch (m) {
    case IntraMode::kNone:
      return CoeffBlock(l.size);
    case IntraMode::kHorizontal: {
      const CoeffBlock left = pr.coeffs.block(l.x - l.size, l.y, l.size);
      return predict::intra_predict(m, &left, nullptr, l.size);
    }
    case IntraMode::kVertical: {
      const CoeffBlock above = pr.coeffs.block(l.x, l.y - l.size, l.size);
      return predict::intra_predict(m, nullptr, &above, l.size);
    }
  }
  return CoeffBlock(l.size);
}

inline CoeffBlock chroma_reference(const PlaneRecon& luma, const Leaf& l, Subsampling ss) {
  const int sh = chroma_shift(ss);
  const Leaf want{l.x << sh, l.y << sh, l.size << sh};
  const Leaf got = luma.tree.leaf_at(want.x, want.y);
  if (got.x != want.x || got.y != want.y || got.size != want.size) return CoeffBlock(l.size);
  const CoeffBlock lb = luma.coeffs.block(want.x, want.y, want.size);
  return predict::cfl_reference(&lb, l.size, ss);
}

inline std::vector<double> gather(const CoeffBlock& b, const std::vector<int>& idx) {
  std::vector<double> v(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) v[i] = b.c[idx[i]];
  return v;
}

inline void scatter(CoeffBlock& b, const std::vector<int>& idx, std::span<const double> v) {
  for (std::size_t i = 0; i < idx.size(); ++i) b.c[idx[i]] = v[i];
}

inline std::optional<std::int32_t> root_neighbour(const PlaneRecon& pr, int sbx, int sby, int sb_cols, bool left) {
  if (left ? sbx == 0 : sby == 0) return std::nullopt;
  return pr.root_dc[static_cast<std::size_t>(left ? sby * sb_cols + sbx - 1 : (sby - 1) * sb_cols + sbx)];
}

inline int detail_index(int node_size) { return std::clamp(size_index(node_size) - 1, 0, 3); }
inline int split_index(int node_size) { return std::clamp(size_index(node_size) - 1, 0, 3); }

// Integer Haar over the DC indices of one superblock tree.  `details`
// receives one quad per internal node in pre-order.
inline std::int32_t haar_reduce(const BlockTree& t, int x, int y, int s, std::span<const std::int32_t> leaf_dc,
                                std::size_t& next, std::vector<transform::HaarQuad>& details) {
  if (t.size_at(x, y) >= s) return leaf_dc[next++];
  const std::size_t slot = details.size();
  details.emplace_back();
  const int h = s / 2;
  const std::int32_t a = haar_reduce(t, x, y, h, leaf_dc, next, details);
  const std::int32_t b = haar_reduce(t, x + h, y, h, leaf_dc, next, details);
  const std::int32_t c = haar_reduce(t, x, y + h, h, leaf_dc, next, details);
  const std::int32_t d = haar_reduce(t, x + h, y + h, h, leaf_dc, next, details);
  details[slot] = transform::haar_dc_forward(a, b, c, d);
  return details[slot].dc;
}

// Haar DC values stay well inside this in any stream the encoder produces.
inline constexpr std::int32_t kMaxDcIndex = 1 << 26;

inline void check_dc(std::int64_t v) {
  if (v > kMaxDcIndex || v < -kMaxDcIndex) throw FormatError("dkf: DC value out of range");
}

// ---------------------------------------------------------------------------
// Band coding for one leaf

// Rate-distortion choice between coding a band against its reference and
// coding it alone.
inline pvq::PvqBand choose_band(std::span<const double> x, std::span<const double> ref, bool ref_available,
                                const Quantizer& qz, double lambda, const pvq::BandContext& bc,
                                const pvq::PulseContext& pc) {
  auto plain = pvq::pvq_quantize_band(x, {}, qz.pvq_q, qz.alpha);
  if (!ref_available) return plain;
  auto with_ref = pvq::pvq_quantize_band(x, ref, qz.pvq_q, qz.alpha);
  auto cost = [&](const pvq::PvqBand& b) {
    const auto r = pvq::pvq_dequantize_band(b, ref, qz.pvq_q, qz.alpha);
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - r[i]) * (x[i] - r[i]);
    BitCounter bits;
    auto bcc = bc;
    auto pcc = pc;
    pvq::encode_band(bits, b, true, qz.pvq_q, qz.alpha, bcc, pcc);
    return d + lambda * bits.bits();
  };
  return cost(with_ref) < cost(plain) ? with_ref : plain;
}

// ---------------------------------------------------------------------------
// Block-size decision

inline double rd_cost(double d, double bits, double lambda) {
  // An infinite multiplier means "rate only"; distortion breaks ties.
  if (std::isinf(lambda)) return bits * 1e30 + d * 1e-30;
  return d + lambda * bits;
}

struct RdoState {
  PlaneContexts luma;
  std::array<CdfTable, 4> split;
};

struct RdoNode {
  double cost = 0;
  std::int32_t value = 0;  // DC index of the node
};

inline CoeffBlock forward_dct(const CoeffBlock& px) {
  return px.size == 64 ? transform::fdct64_lowband(px) : transform::fdct(px);
}

// Leaf-local trial: no lapping, no intra; every band coded without a
// reference.  Returns distortion and bits.
inline std::pair<double, double> rdo_leaf(const Plane<std::int32_t>& src, int x, int y, int s, const Quantizer& qz,
                                          PlaneContexts& ctx, std::int32_t& dc_index) {
  const CoeffBlock px = transform::load_block(src, x, y, s);
  const CoeffBlock c = forward_dct(px);
  dc_index = static_cast<std::int32_t>(std::lround(c.c[0] / qz.dc_step));
  double d = (c.c[0] - dc_index * qz.dc_step) * (c.c[0] - dc_index * qz.dc_step);
  if (s == 64) {
    // Frequencies outside the coded quadrant are dropped; by Parseval their
    // energy is whatever the quadrant does not account for.
    double total = 0, low = 0;
    for (double v : px.c) total += v * v;
    for (int v = 0; v < 32; ++v)
      for (int u = 0; u < 32; ++u) low += c.at(u, v) * c.at(u, v);
    d += std::max(0.0, total - low);
  }
  BitCounter bits;
  const auto& layout = pvq::band_layout(s);
  for (std::size_t b = 0; b < layout.bands.size(); ++b) {
    const auto xb = gather(c, layout.bands[b]);
    const auto band = pvq::pvq_quantize_band(xb, {}, qz.pvq_q, qz.alpha);
    pvq::encode_band(bits, band, false, qz.pvq_q, qz.alpha, ctx.bands[size_index(s)][b], ctx.pulses);
    const auto r = pvq::pvq_dequantize_band(band, {}, qz.pvq_q, qz.alpha);
    for (std::size_t i = 0; i < xb.size(); ++i) d += (xb[i] - r[i]) * (xb[i] - r[i]);
  }
  return {d, bits.bits()};
}

inline RdoNode rdo_node(const Plane<std::int32_t>& src, int x, int y, int s, const Quantizer& qz, double lambda,
                        RdoState& st, BlockTree& tree) {
  RdoState leaf_st = st;
  BitCounter leaf_bits;
  if (s > 4) leaf_bits.encode_adaptive(leaf_st.split[split_index(s)], 0);
  std::int32_t dc = 0;
  const auto [ld, lb] = rdo_leaf(src, x, y, s, qz, leaf_st.luma, dc);
  const double leaf_cost = rd_cost(ld, lb + leaf_bits.bits(), lambda);
  if (s == 4) {
    st = leaf_st;
    tree.set_leaf(x, y, 4);
    return {leaf_cost, dc};
  }
  RdoState split_st = st;
  BitCounter split_bits;
  split_bits.encode_adaptive(split_st.split[split_index(s)], 1);
  double split_cost = 0;
  std::array<std::int32_t, 4> v{};
  const int h = s / 2;
  for (int i = 0; i < 4; ++i) {
    const RdoNode r = rdo_node(src, x + (i & 1) * h, y + (i >> 1) * h, h, qz, lambda, split_st, tree);
    split_cost += r.cost;
    v[i] = r.value;
  }
  const auto quad = transform::haar_dc_forward(v[0], v[1], v[2], v[3]);
  auto& dctx = split_st.luma.dc_detail[detail_index(s)];
  write_sint(split_bits, dctx, quad.h);
  write_sint(split_bits, dctx, quad.v);
  write_sint(split_bits, dctx, quad.d);
  split_cost += rd_cost(0, split_bits.bits(), lambda);
  if (split_cost < leaf_cost) {
    st = split_st;
    return {split_cost, quad.dc};
  }
  tree.set_leaf(x, y, s);
  st = leaf_st;
  return {leaf_cost, dc};
}

// Quadtree for one 64x64 superblock of 8-bit luma, with fresh contexts.
inline BlockTree rdo_split(const Plane<std::uint8_t>& sb, int q, double lambda_scale = kDefaultLambdaScale) {
  require(sb.width() == kSbSize && sb.height() == kSbSize, "rdo_split: superblock must be 64x64");
  require(q >= 1, "rdo_split: q must be >= 1");
  const auto src = transform::to_coding_domain(sb, kSbSize, kSbSize);
  BlockTree tree(kSbSize, kSbSize);
  RdoState st;
  rdo_node(src, 0, 0, kSbSize, plane_quantizer(q, 0), lambda_for(lambda_scale, q), st, tree);
  return tree;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncodeResult {
  std::vector<std::uint8_t> bytes;
  PlanarImage reconstruction;  // what the decoder will output
  BlockTree luma_tree;
  std::vector<std::uint8_t> dering_flags;
  int dering_threshold = 0;
};

namespace detail {

struct EncoderPlane {
  Plane<std::int32_t> source;  // lapped coding-domain input
};

inline void encode_dc_tree(RangeEncoder& enc, PlaneContexts& ctx, PlaneRecon& pr, const Geometry& g, int plane,
                           int sbx, int sby, std::span<const std::int32_t> leaf_dc) {
  const int sb = g.sb(plane);
  std::vector<transform::HaarQuad> details;
  std::size_t next = 0;
  const std::int32_t root = haar_reduce(pr.tree, sbx * sb, sby * sb, sb, leaf_dc, next, details);
  const std::int32_t pred = predict::dc_predict(root_neighbour(pr, sbx, sby, g.sb_cols, true),
                                                root_neighbour(pr, sbx, sby, g.sb_cols, false));
  write_sint(enc, ctx.dc_root, root - pred);
  std::size_t k = 0;
  pr.tree.visit_nodes(sbx, sby, [&](int, int, int s, bool leaf) {
    if (leaf) return;
    auto& dctx = ctx.dc_detail[detail_index(s)];
    write_sint(enc, dctx, details[k].h);
    write_sint(enc, dctx, details[k].v);
    write_sint(enc, dctx, details[k].d);
    ++k;
  });
  pr.root_dc[static_cast<std::size_t>(sby * g.sb_cols + sbx)] = root;
}

inline void encode_plane_sb(RangeEncoder& enc, Contexts& ctx, std::array<PlaneRecon, 3>& pr,
                            const std::array<EncoderPlane, 3>& ep, const Geometry& g, int plane, int sbx, int sby,
                            const Quantizer& qz, double lambda) {
  PlaneRecon& p = pr[plane];
  PlaneContexts& pc = ctx.plane[plane == 0 ? 0 : 1];
  const auto leaves = p.tree.leaves(sbx, sby);
  std::vector<CoeffBlock> src;
  std::vector<std::int32_t> leaf_dc;
  for (const Leaf& l : leaves) {
    src.push_back(forward_dct(transform::load_block(ep[plane].source, l.x, l.y, l.size)));
    leaf_dc.push_back(static_cast<std::int32_t>(std::lround(src.back().c[0] / qz.dc_step)));
  }
  encode_dc_tree(enc, pc, p, g, plane, sbx, sby, leaf_dc);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Leaf& l = leaves[i];
    const CoeffBlock& s = src[i];
    CoeffBlock ref(l.size);
    if (plane == 0) {
      IntraMode best = IntraMode::kNone;
      if (intra_signalled(p.tree, l)) {
        double best_sse = std::numeric_limits<double>::infinity();
        for (int m = 0; m < predict::kIntraModes; ++m) {
          const auto mode = static_cast<IntraMode>(m);
          if (!intra_mode_available(p.tree, l, mode)) continue;
          const CoeffBlock r = intra_reference(p, l, mode);
          double sse = 0;
          for (std::size_t j = 1; j < s.c.size(); ++j) sse += (s.c[j] - r.c[j]) * (s.c[j] - r.c[j]);
          if (sse < best_sse) {
            best_sse = sse;
            best = mode;
          }
        }
        enc.encode_adaptive(pc.intra[size_index(l.size)], static_cast<int>(best));
      }
      ref = intra_reference(p, l, best);
    } else {
      ref = chroma_reference(pr[0], l, g.ss);
    }
    CoeffBlock rec(l.size);
    rec.c[0] = leaf_dc[i] * qz.dc_step;
    const auto& layout = pvq::band_layout(l.size);
    for (std::size_t b = 0; b < layout.bands.size(); ++b) {
      const auto xb = gather(s, layout.bands[b]);
      const auto rb = gather(ref, layout.bands[b]);
      const bool avail = pvq::has_energy(rb);
      auto& bc = pc.bands[size_index(l.size)][b];
      const auto band = choose_band(xb, rb, avail, qz, lambda, bc, pc.pulses);
      pvq::encode_band(enc, band, avail, qz.pvq_q, qz.alpha, bc, pc.pulses);
      scatter(rec, layout.bands[b], pvq::pvq_dequantize_band(band, rb, qz.pvq_q, qz.alpha));
    }
    commit_leaf(p, l, rec);
  }
}

inline void encode_split_flags(RangeEncoder& enc, Contexts& ctx, const BlockTree& t, int sbx, int sby) {
  t.visit_nodes(sbx, sby, [&](int, int, int s, bool leaf) {
    if (s > 4) enc.encode_adaptive(ctx.split[split_index(s)], leaf ? 0 : 1);
  });
}

inline double sse_region(const PlanarImage& a, const PlanarImage& b, int plane, int x0, int y0, int w, int h) {
  const auto& pa = a.planes[plane];
  const auto& pb = b.planes[plane];
  double e = 0;
  for (int y = y0; y < std::min(y0 + h, pa.height()); ++y)
    for (int x = x0; x < std::min(x0 + w, pa.width()); ++x) {
      const double d = static_cast<double>(pa.at(x, y)) - pb.at(x, y);
      e += d * d;
    }
  return e;
}

}  // namespace detail

inline BlockTree chroma_tree(const BlockTree& luma, Subsampling ss) {
  return ss == Subsampling::k420 ? luma.halved() : luma;
}

// Copies one superblock of chroma_tree(luma) into `chroma`.
inline void derive_chroma_sb(const BlockTree& luma, BlockTree& chroma, Subsampling ss, int sbx, int sby) {
  const int sh = chroma_shift(ss);
  const int sb = chroma.sb_size();
  for (int y = sby * sb; y < (sby + 1) * sb; y += 4) {
    for (int x = sbx * sb; x < (sbx + 1) * sb; x += 4) {
      const int s = std::max(4, luma.size_at(x << sh, y << sh) >> sh);
      if (x % s == 0 && y % s == 0) chroma.set_leaf(x, y, s);
    }
  }
}

inline EncodeResult encode_keyframe_detailed(const PlanarImage& img, const EncoderConfig& cfg) {
  require(img.valid(), "encode_keyframe: invalid image");
  require(cfg.base_q >= 1 && cfg.base_q <= 255, "encode_keyframe: base_q must be in [1, 255]");
  require(cfg.lambda_scale >= 0, "encode_keyframe: lambda_scale must be >= 0");
  if (img.width > kMaxDimension || img.height > kMaxDimension)
    throw UnsupportedFormat("encode_keyframe: dimensions above 65535 are not supported");
  const Geometry g(img.width, img.height, img.subsampling);
  const double lambda = lambda_for(cfg.lambda_scale, cfg.base_q);
  std::array<Quantizer, 3> qz;
  for (int c = 0; c < 3; ++c) qz[c] = plane_quantizer(cfg.base_q, c);

  std::array<detail::EncoderPlane, 3> ep;
  for (int c = 0; c < 3; ++c) ep[c].source = transform::to_coding_domain(img.planes[c], g.plane_w(c), g.plane_h(c));

  // Block sizes from the unlapped luma.
  BlockTree luma_tree(g.pad_w, g.pad_h);
  {
    RdoState st;
    for (int sby = 0; sby < g.sb_rows; ++sby)
      for (int sbx = 0; sbx < g.sb_cols; ++sbx)
        rdo_node(ep[0].source, sbx * kSbSize, sby * kSbSize, kSbSize, qz[0], lambda, st, luma_tree);
  }
  std::array<PlaneRecon, 3> pr;
  for (int c = 0; c < 3; ++c) {
    pr[c].tree = c == 0 ? luma_tree : chroma_tree(luma_tree, g.ss);
    pr[c].spatial = Plane<std::int32_t>(g.plane_w(c), g.plane_h(c));
    pr[c].coeffs = CoeffWindow(g.plane_w(c), g.plane_h(c), g.sb(c));
    pr[c].root_dc.assign(static_cast<std::size_t>(g.sb_cols) * g.sb_rows, 0);
    transform::apply_lapping(ep[c].source, pr[c].tree, transform::LapDirection::kForward);
  }

  RangeEncoder enc(cfg.partition);
  Contexts ctx;
  for (int sby = 0; sby < g.sb_rows; ++sby) {
    for (int sbx = 0; sbx < g.sb_cols; ++sbx) {
      detail::encode_split_flags(enc, ctx, luma_tree, sbx, sby);
      for (int c = 0; c < 3; ++c) detail::encode_plane_sb(enc, ctx, pr, ep, g, c, sbx, sby, qz[c], lambda);
    }
  }
  PlanarImage padded = finish_planes(pr, g);

  EncodeResult res;
  res.luma_tree = luma_tree;
  res.dering_flags.assign(static_cast<std::size_t>(g.sb_cols) * g.sb_rows, 0);
  res.dering_threshold = cfg.dering_enabled ? dering_threshold(cfg.base_q) : 0;
  if (res.dering_threshold > 0) {
    // Filtering is block-local, so each superblock's choice is independent.
    const std::vector<std::uint8_t> all(res.dering_flags.size(), 1);
    const PlanarImage filtered = dering::dering_frame(padded, all, res.dering_threshold);
    for (int sby = 0; sby < g.sb_rows; ++sby) {
      for (int sbx = 0; sbx < g.sb_cols; ++sbx) {
        double before = 0, after = 0;
        for (int c = 0; c < 3; ++c) {
          const int sb = g.sb(c), sh = g.shift(c);
          const int w = (g.width + sh) >> sh, h = (g.height + sh) >> sh;
          const int x0 = sbx * sb, y0 = sby * sb;
          if (x0 >= w || y0 >= h) continue;
          const int rw = std::min(sb, w - x0), rh = std::min(sb, h - y0);
          before += detail::sse_region(padded, img, c, x0, y0, rw, rh);
          after += detail::sse_region(filtered, img, c, x0, y0, rw, rh);
        }
        const bool on = after < before;
        res.dering_flags[static_cast<std::size_t>(sby * g.sb_cols + sbx)] = on ? 1 : 0;
        enc.encode_adaptive(ctx.dering, on ? 1 : 0);
      }
    }
    padded = dering::dering_frame(padded, res.dering_flags, res.dering_threshold);
  }
  res.reconstruction = crop(padded, g.width, g.height);

  Header h;
  h.width = g.width;
  h.height = g.height;
  h.subsampling = g.ss;
  h.partition = cfg.partition;
  h.base_q = cfg.base_q;
  h.dering = cfg.dering_enabled;
  const auto head = h.serialize();
  res.bytes.assign(head.begin(), head.end());
  const auto payload = enc.finish();
  res.bytes.insert(res.bytes.end(), payload.begin(), payload.end());
  return res;
}

inline std::vector<std::uint8_t> encode_keyframe(const PlanarImage& img, const EncoderConfig& cfg) {
  return encode_keyframe_detailed(img, cfg).bytes;
}

// ---------------------------------------------------------------------------
// Decoder

struct DecodeStats {
  std::array<int, 5> luma_leaves{};  // by size index (4..64)
  // Nonzero dequantized coefficients outside the low 32x32 quadrant of any
  // 64x64 leaf.  The format has no symbols for them, so this stays 0.
  int high_band_coefficients_64 = 0;
  int dering_superblocks = 0;
  std::size_t payload_bytes = 0;
};

namespace detail {

inline void decode_tree(RangeDecoder& dec, Contexts& ctx, BlockTree& t, int x, int y, int s) {
  if (s > 4 && dec.decode_adaptive(ctx.split[split_index(s)]) == 1) {
    const int h = s / 2;
    for (int i = 0; i < 4; ++i) decode_tree(dec, ctx, t, x + (i & 1) * h, y + (i >> 1) * h, h);
    return;
  }
  t.set_leaf(x, y, s);
}

inline void expand_dc(RangeDecoder& dec, PlaneContexts& ctx, const BlockTree& t, int x, int y, int s,
                      std::int32_t value, std::vector<std::int32_t>& out) {
  if (t.size_at(x, y) >= s) {
    out.push_back(value);
    return;
  }
  auto& dctx = ctx.dc_detail[detail_index(s)];
  transform::HaarQuad q{value, 0, 0, 0};
  q.h = read_sint(dec, dctx);
  q.v = read_sint(dec, dctx);
  q.d = read_sint(dec, dctx);
  const auto kids = transform::haar_dc_inverse(q);
  const int h = s / 2;
  for (int i = 0; i < 4; ++i) {
    check_dc(kids[i]);
    expand_dc(dec, ctx, t, x + (i & 1) * h, y + (i >> 1) * h, h, kids[i], out);
  }
}

inline void decode_plane_sb(RangeDecoder& dec, Contexts& ctx, std::array<PlaneRecon, 3>& pr, const Geometry& g,
                            int plane, int sbx, int sby, const Quantizer& qz, DecodeStats* stats) {
  PlaneRecon& p = pr[plane];
  PlaneContexts& pc = ctx.plane[plane == 0 ? 0 : 1];
  const int sb = g.sb(plane);
  const std::int32_t pred = predict::dc_predict(root_neighbour(p, sbx, sby, g.sb_cols, true),
                                                root_neighbour(p, sbx, sby, g.sb_cols, false));
  const std::int64_t root = static_cast<std::int64_t>(pred) + read_sint(dec, pc.dc_root);
  check_dc(root);
  p.root_dc[static_cast<std::size_t>(sby * g.sb_cols + sbx)] = static_cast<std::int32_t>(root);
  std::vector<std::int32_t> leaf_dc;
  expand_dc(dec, pc, p.tree, sbx * sb, sby * sb, sb, static_cast<std::int32_t>(root), leaf_dc);
  const auto leaves = p.tree.leaves(sbx, sby);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Leaf& l = leaves[i];
    CoeffBlock ref(l.size);
    if (plane == 0) {
      IntraMode mode = IntraMode::kNone;
      if (intra_signalled(p.tree, l)) {
        mode = static_cast<IntraMode>(dec.decode_adaptive(pc.intra[size_index(l.size)]));
        if (!intra_mode_available(p.tree, l, mode)) throw FormatError("dkf: intra mode without a neighbour");
      }
      ref = intra_reference(p, l, mode);
      if (stats) ++stats->luma_leaves[size_index(l.size)];
    } else {
      ref = chroma_reference(pr[0], l, g.ss);
    }
    CoeffBlock rec(l.size);
    rec.c[0] = leaf_dc[i] * qz.dc_step;
    const auto& layout = pvq::band_layout(l.size);
    for (std::size_t b = 0; b < layout.bands.size(); ++b) {
      const auto rb = gather(ref, layout.bands[b]);
      const bool avail = pvq::has_energy(rb);
      const auto band = pvq::decode_band(dec, static_cast<int>(layout.bands[b].size()), avail, qz.pvq_q, qz.alpha,
                                         pc.bands[size_index(l.size)][b], pc.pulses);
      scatter(rec, layout.bands[b], pvq::pvq_dequantize_band(band, rb, qz.pvq_q, qz.alpha));
    }
    if (stats && l.size == 64) {
      for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u)
          if ((u >= 32 || v >= 32) && rec.at(u, v) != 0) ++stats->high_band_coefficients_64;
    }
    commit_leaf(p, l, rec);
  }
}

}  // namespace detail

inline PlanarImage decode_keyframe(std::span<const std::uint8_t> bytes, DecodeStats* stats = nullptr) {
  const Header h = Header::parse(bytes);
  if (static_cast<std::int64_t>(h.width) * h.height > kMaxDecodePixels)
    throw FormatError("dkf: picture exceeds the decoder limit");
  const Geometry g(h.width, h.height, h.subsampling);
  std::array<Quantizer, 3> qz;
  for (int c = 0; c < 3; ++c) qz[c] = plane_quantizer(h.base_q, c);

  RangeDecoder dec(bytes.subspan(kHeaderSize), h.partition);
  Contexts ctx;
  std::array<PlaneRecon, 3> pr;
  for (int c = 0; c < 3; ++c) {
    pr[c].tree = BlockTree(g.plane_w(c), g.plane_h(c), kMaxLog2 - g.shift(c));
    pr[c].spatial = Plane<std::int32_t>(g.plane_w(c), g.plane_h(c));
    pr[c].coeffs = CoeffWindow(g.plane_w(c), g.plane_h(c), g.sb(c));
    pr[c].root_dc.assign(static_cast<std::size_t>(g.sb_cols) * g.sb_rows, 0);
  }
  for (int sby = 0; sby < g.sb_rows; ++sby) {
    for (int sbx = 0; sbx < g.sb_cols; ++sbx) {
      detail::decode_tree(dec, ctx, pr[0].tree, sbx * kSbSize, sby * kSbSize, kSbSize);
      derive_chroma_sb(pr[0].tree, pr[1].tree, g.ss, sbx, sby);
      derive_chroma_sb(pr[0].tree, pr[2].tree, g.ss, sbx, sby);
      for (int c = 0; c < 3; ++c) {
        detail::decode_plane_sb(dec, ctx, pr, g, c, sbx, sby, qz[c], stats);
      }
    }
  }
  PlanarImage padded = finish_planes(pr, g);
  const int t = h.dering ? dering_threshold(h.base_q) : 0;
  if (t > 0) {
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(g.sb_cols) * g.sb_rows);
    for (auto& f : flags) {
      f = static_cast<std::uint8_t>(dec.decode_adaptive(ctx.dering));
      if (stats) stats->dering_superblocks += f;
    }
    padded = dering::dering_frame(padded, flags, t);
  }
  if (stats) stats->payload_bytes = bytes.size() - kHeaderSize;
  return crop(padded, g.width, g.height);
}

}  // namespace dkf::codec
