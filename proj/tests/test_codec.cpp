#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dkf/codec.hpp"

using namespace dkf;
using namespace dkf::codec;

namespace {

double luma_psnr(const PlanarImage& a, const PlanarImage& b) {
  double e = 0;
  const auto& pa = a.luma().samples();
  const auto& pb = b.luma().samples();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    e += d * d;
  }
  e /= static_cast<double>(pa.size());
  return e == 0 ? 99.0 : 10 * std::log10(255.0 * 255.0 / e);
}

PlanarImage noise_image(int w, int h, Subsampling ss, unsigned seed) {
  std::mt19937 rng(seed);
  PlanarImage img(w, h, ss);
  for (auto& p : img.planes)
    for (auto& v : p.samples()) v = static_cast<std::uint8_t>(rng());
  return img;
}

// Smooth gradient with a soft blob so every plane has some structure.
PlanarImage smooth_image(int w, int h, Subsampling ss) {
  PlanarImage img(w, h, ss);
  for (int c = 0; c < 3; ++c) {
    auto& p = img.planes[c];
    for (int y = 0; y < p.height(); ++y)
      for (int x = 0; x < p.width(); ++x) {
        const double v = 60 + 1.5 * x + 0.7 * y + 40 * std::sin(0.11 * x * (c + 1)) * std::cos(0.07 * y);
        p.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  }
  return img;
}

Plane<std::uint8_t> flat_with_textured_quadrant() {
  Plane<std::uint8_t> p(64, 64, 128);
  for (int y = 32; y < 64; ++y)
    for (int x = 32; x < 64; ++x) p.at(x, y) = ((x / 4 + y / 4) % 2) ? 200 : 56;
  return p;
}

}  // namespace

TEST(ChromaQ, Fixtures) {
  EXPECT_EQ(chroma_q_map(48), 48);
  EXPECT_EQ(chroma_q_map(8), 10);
  EXPECT_EQ(chroma_q_map(224), 193);
  EXPECT_EQ(chroma_q_map(1), 1);
  EXPECT_THROW(chroma_q_map(0), ContractError);
}

TEST(ChromaQ, FactorCrossesAtFortyEight) {
  for (int q = 1; q < 48; ++q) EXPECT_GT(chroma_q_factor(q), 1.0) << q;
  EXPECT_DOUBLE_EQ(chroma_q_factor(48), 1.0);
  for (int q = 49; q <= 255; ++q) EXPECT_LT(chroma_q_factor(q), 1.0) << q;
  for (int q = 1; q < 255; ++q) EXPECT_LE(chroma_q_map(q), chroma_q_map(q + 1));
}

TEST(Header, RoundTripAndErrors) {
  Header h;
  h.width = 300;
  h.height = 65535;
  h.subsampling = Subsampling::k444;
  h.partition = PartitionKind::kLegacy;
  h.base_q = 200;
  h.dering = false;
  const auto b = h.serialize();
  ASSERT_EQ(b.size(), kHeaderSize);
  const Header back = Header::parse(b);
  EXPECT_EQ(back.width, 300);
  EXPECT_EQ(back.height, 65535);
  EXPECT_EQ(back.subsampling, Subsampling::k444);
  EXPECT_EQ(back.partition, PartitionKind::kLegacy);
  EXPECT_EQ(back.base_q, 200);
  EXPECT_FALSE(back.dering);

  auto bad = b;
  bad[0] = 'X';
  EXPECT_THROW(Header::parse(bad), FormatError);
  bad = b;
  bad[4] = 2;
  EXPECT_THROW(Header::parse(bad), FormatError);
  bad = b;
  bad[9] = 7;
  EXPECT_THROW(Header::parse(bad), FormatError);
  bad = b;
  bad[11] = 0;
  EXPECT_THROW(Header::parse(bad), FormatError);
  EXPECT_THROW(Header::parse(std::span(b).first(5)), TruncatedStream);
}

TEST(Decode, HeaderOnlyIsTruncated) {
  Header h;
  h.width = 16;
  h.height = 16;
  h.base_q = 10;
  const auto b = h.serialize();
  EXPECT_THROW(decode_keyframe(b), TruncatedStream);
}

TEST(Decode, OversizedHeaderIsRefused) {
  Header h;
  h.width = 65535;
  h.height = 65535;
  h.base_q = 10;
  auto b = h.serialize();
  std::vector<std::uint8_t> s(b.begin(), b.end());
  s.resize(s.size() + 64, 0);
  EXPECT_THROW(decode_keyframe(s), FormatError);
}

TEST(Encode, ConstantGrayIsTiny) {
  PlanarImage img(64, 64, Subsampling::k420, 128);
  EncoderConfig cfg;
  cfg.base_q = 20;
  const auto r = encode_keyframe_detailed(img, cfg);
  EXPECT_LT(r.bytes.size(), 40u);
  EXPECT_EQ(decode_keyframe(r.bytes), r.reconstruction);
  EXPECT_EQ(r.reconstruction, img);
}

TEST(Encode, RejectsOversizedAndBadConfig) {
  PlanarImage wide;
  wide.width = 65536;
  wide.height = 1;
  wide.planes = {Plane<std::uint8_t>(65536, 1), Plane<std::uint8_t>(32768, 1), Plane<std::uint8_t>(32768, 1)};
  EXPECT_THROW(encode_keyframe(wide, EncoderConfig{}), UnsupportedFormat);
  EncoderConfig bad;
  bad.base_q = 0;
  EXPECT_THROW(encode_keyframe(PlanarImage(8, 8, Subsampling::k420), bad), ContractError);
}

TEST(RoundTrip, OddSizesBothSubsamplings) {
  const int sizes[][2] = {{1, 1}, {3, 5}, {17, 9}, {65, 33}, {100, 70}, {130, 129}};
  for (auto ss : {Subsampling::k420, Subsampling::k444}) {
    for (const auto& wh : sizes) {
      for (int q : {4, 40, 200}) {
        const auto img = smooth_image(wh[0], wh[1], ss);
        EncoderConfig cfg;
        cfg.base_q = q;
        const auto r = encode_keyframe_detailed(img, cfg);
        const auto dec = decode_keyframe(r.bytes);
        ASSERT_EQ(dec, r.reconstruction) << wh[0] << "x" << wh[1] << " q" << q;
        EXPECT_TRUE(dec.valid());
      }
    }
  }
}

TEST(RoundTrip, LegacyPartitionAndDeringOff) {
  const auto img = smooth_image(96, 80, Subsampling::k420);
  for (auto kind : {PartitionKind::kLegacy, PartitionKind::kReducedOverhead}) {
    for (bool dr : {false, true}) {
      EncoderConfig cfg;
      cfg.base_q = 60;
      cfg.partition = kind;
      cfg.dering_enabled = dr;
      const auto r = encode_keyframe_detailed(img, cfg);
      EXPECT_EQ(decode_keyframe(r.bytes), r.reconstruction);
      EXPECT_EQ(Header::parse(r.bytes).partition, kind);
    }
  }
}

TEST(RoundTrip, NoiseAtQOneIsNearLossless) {
  const auto img = noise_image(64, 64, Subsampling::k420, 42);
  EncoderConfig cfg;
  cfg.base_q = 1;
  const auto r = encode_keyframe_detailed(img, cfg);
  const auto dec = decode_keyframe(r.bytes);
  EXPECT_EQ(dec, r.reconstruction);
  EXPECT_GE(luma_psnr(img, dec), 45.0);
}

TEST(RoundTrip, Deterministic) {
  const auto img = smooth_image(80, 72, Subsampling::k420);
  EncoderConfig cfg;
  cfg.base_q = 33;
  EXPECT_EQ(encode_keyframe(img, cfg), encode_keyframe(img, cfg));
}

TEST(RoundTrip, RateAndDistortionFollowQ) {
  const auto img = smooth_image(128, 128, Subsampling::k420);
  std::size_t prev_bytes = std::numeric_limits<std::size_t>::max();
  double prev_psnr = 100;
  for (int q : {8, 16, 32, 64, 128, 224}) {
    EncoderConfig cfg;
    cfg.base_q = q;
    const auto r = encode_keyframe_detailed(img, cfg);
    const double p = luma_psnr(img, r.reconstruction);
    EXPECT_LE(r.bytes.size(), prev_bytes) << q;
    EXPECT_LE(p, prev_psnr + 0.05) << q;
    prev_bytes = r.bytes.size();
    prev_psnr = p;
  }
}

TEST(Rdo, FlatSuperblockIsOneLeaf) {
  const Plane<std::uint8_t> flat(64, 64, 90);
  for (int q : {1, 20, 200}) {
    const auto t = rdo_split(flat, q);
    EXPECT_EQ(t.size_at(0, 0), 64) << q;
  }
}

TEST(Rdo, TexturedQuadrantIsIsolated) {
  const auto t = rdo_split(flat_with_textured_quadrant(), 16);
  EXPECT_LT(t.size_at(0, 0), 64);
  EXPECT_EQ(t.size_at(0, 0), 32);
  EXPECT_EQ(t.size_at(32, 0), 32);
  EXPECT_EQ(t.size_at(0, 32), 32);
}

TEST(Rdo, InfiniteLambdaIsMinimalRate) {
  // Smooth, non-flat content.  (The checkerboard fixture is not usable here:
  // its 4x4 cells make 4x4 leaves DC-only, which really is the cheapest tree.)
  Plane<std::uint8_t> ramp(64, 64), wave(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      ramp.at(x, y) = static_cast<std::uint8_t>(60 + x + y / 2);
      wave.at(x, y) = static_cast<std::uint8_t>(128 + std::lround(40 * std::sin(0.2 * x) * std::cos(0.15 * y)));
    }
  const double inf = std::numeric_limits<double>::infinity();
  for (int q : {4, 64}) {
    EXPECT_EQ(rdo_split(ramp, q, inf).size_at(0, 0), 64) << q;
    EXPECT_EQ(rdo_split(wave, q, inf).size_at(0, 0), 64) << q;
  }
}

TEST(Stats, LargeLeavesCodeOnlyTheLowQuadrant) {
  // Smooth content at coarse q favours 64x64 leaves.
  const auto img = smooth_image(128, 128, Subsampling::k420);
  EncoderConfig cfg;
  cfg.base_q = 200;
  const auto r = encode_keyframe_detailed(img, cfg);
  DecodeStats st;
  const auto dec = decode_keyframe(r.bytes, &st);
  EXPECT_EQ(dec, r.reconstruction);
  EXPECT_GT(st.luma_leaves[4], 0);
  EXPECT_EQ(st.high_band_coefficients_64, 0);
  EXPECT_EQ(st.payload_bytes, r.bytes.size() - kHeaderSize);
  int flagged = 0;
  for (auto f : r.dering_flags) flagged += f;
  EXPECT_EQ(st.dering_superblocks, flagged);
}

TEST(Decode, CorruptedStreamsNeverCrash) {
  const auto img = smooth_image(72, 40, Subsampling::k420);
  EncoderConfig cfg;
  cfg.base_q = 24;
  const auto good = encode_keyframe(img, cfg);
  std::mt19937 rng(7);
  int decoded = 0, rejected = 0;
  for (int i = 0; i < 400; ++i) {
    auto s = good;
    const int kind = i % 3;
    if (kind == 0) {
      for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k)
        s[kHeaderSize + rng() % (s.size() - kHeaderSize)] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    } else if (kind == 1) {
      s.resize(kHeaderSize + rng() % (s.size() - kHeaderSize));
    } else {
      for (std::size_t k = kHeaderSize; k < s.size(); ++k) s[k] = static_cast<std::uint8_t>(rng());
    }
    try {
      const auto out = decode_keyframe(s);
      EXPECT_TRUE(out.valid());
      ++decoded;
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_EQ(decoded + rejected, 400);
}
