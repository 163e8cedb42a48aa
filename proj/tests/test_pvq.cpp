#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dkf/pvq.hpp"
#include "oracles.hpp"

using namespace dkf;
using namespace dkf::pvq;

namespace {

double norm(std::span<const double> v) {
  double s = 0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

}  // namespace

TEST(PvqSearch, SpecFixtures) {
  const std::vector<double> a = {4, 0, 0, 0};
  EXPECT_EQ(pvq_search(a, 3), (std::vector<int>{3, 0, 0, 0}));
  const std::vector<double> b = {3, 4};
  EXPECT_EQ(pvq_search(b, 7), (std::vector<int>{3, 4}));
  const std::vector<double> c = {1, 1};
  EXPECT_EQ(pvq_search(c, 3), (std::vector<int>{2, 1}));
  EXPECT_EQ(pvq_search(b, 5), (std::vector<int>{2, 3}));
}

TEST(PvqSearch, SignsAndDegenerateInput) {
  const std::vector<double> x = {-3, 0.5, 2, -0.1};
  const auto y = pvq_search(x, 6);
  EXPECT_EQ(std::accumulate(y.begin(), y.end(), 0, [](int s, int v) { return s + std::abs(v); }), 6);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] != 0) {
      EXPECT_EQ(y[i] < 0, x[i] < 0);
    }
  const std::vector<double> zero(5, 0.0);
  EXPECT_EQ(pvq_search(zero, 4), (std::vector<int>{4, 0, 0, 0, 0}));
  EXPECT_EQ(pvq_search(zero, 0), (std::vector<int>(5, 0)));
}

TEST(PvqSearch, MatchesExhaustiveSmall) {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> small(-3, 3);
  int cases = 0;
  for (int n = 1; n <= 6; ++n) {
    for (int k = 1; k <= 8; ++k) {
      for (int t = 0; t < 60; ++t) {
        std::vector<double> x(n);
        for (auto& v : x) v = t % 3 == 0 ? small(gen) : nd(gen);
        const auto got = pvq_search(x, k);
        const auto want = oracle::pvq_exhaustive(x, k);
        ASSERT_NEAR(oracle::pvq_objective(x, got), oracle::pvq_objective(x, want), 1e-9)
            << "n=" << n << " k=" << k;
        if (t % 3 != 0) {
          ASSERT_EQ(got, want);
        }
        ++cases;
      }
    }
  }
  EXPECT_GE(cases, 2880);
}

TEST(PvqSearch, LargeBandsKeepPulseCount) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  for (int n : {48, 192, 768}) {
    std::vector<double> x(n);
    for (auto& v : x) v = nd(gen) * (1 + (gen() % 10 == 0) * 10);
    for (int k : {1, 7, 40, 300}) {
      const auto y = pvq_search(x, k);
      int s = 0;
      for (int v : y) s += std::abs(v);
      EXPECT_EQ(s, k);
    }
  }
}

TEST(Gain, CompandExpandExamples) {
  EXPECT_EQ(gain_compand(0, 1, 0), 0);
  EXPECT_EQ(gain_expand(0, 1, 0), 0.0);
  EXPECT_EQ(gain_compand(7.3, 1, 0), 7);
  EXPECT_DOUBLE_EQ(gain_expand(7, 1, 0), 7.0);
  EXPECT_EQ(gain_compand(8, 1, 1.0 / 3), 4);
  EXPECT_NEAR(gain_expand(4, 1, 1.0 / 3), 8.0, 1e-12);
}

TEST(Gain, WithinOneCell) {
  for (double alpha : {0.0, 1.0 / 3}) {
    for (double q : {0.5, 3.0, 40.0}) {
      for (double g = 0; g < 2000; g += 3.7) {
        const int i = gain_compand(g, q, alpha);
        const double lo = gain_expand(std::max(0, i - 1), q, alpha);
        const double hi = gain_expand(i + 1, q, alpha);
        EXPECT_GE(g, lo);
        EXPECT_LE(g, hi);
      }
    }
  }
}

TEST(BandLayout, SizesAndPartition) {
  EXPECT_EQ(band_layout(4).bands.size(), 1u);
  EXPECT_EQ(band_layout(4).bands[0].size(), 15u);
  std::vector<std::size_t> s8;
  for (const auto& b : band_layout(8).bands) s8.push_back(b.size());
  EXPECT_EQ(s8, (std::vector<std::size_t>{3, 12, 48}));
  for (int n : {4, 8, 16, 32, 64}) {
    std::set<int> seen;
    for (const auto& b : band_layout(n).bands) {
      EXPECT_GE(b.size(), 3u);
      for (int i : b) EXPECT_TRUE(seen.insert(i).second);
    }
    const int coded = n == 64 ? 32 : n;
    EXPECT_EQ(static_cast<int>(seen.size()), coded * coded - 1);
    EXPECT_FALSE(seen.count(0));
    for (int i : seen) {
      EXPECT_LT(i % n, coded);
      EXPECT_LT(i / n, coded);
    }
  }
}

TEST(Quantize, NoRefFixture) {
  const std::vector<double> x = {3, 4};
  const auto b = pvq_quantize_band(x, {}, 1.0, 0.0);
  EXPECT_EQ(b.gain_index, 5);
  // K = round(5 sqrt(5 / 2)) = 8; {3, 5} beats {4, 4} on x.y / |y|.
  EXPECT_EQ(b.k, 8);
  EXPECT_EQ(b.pulses, (std::vector<int>{3, 5}));
  const auto r = pvq_dequantize_band(b, {}, 1.0, 0.0);
  EXPECT_NEAR(r[0], 5 * 3 / std::sqrt(34.0), 1e-12);
  EXPECT_NEAR(r[1], 5 * 5 / std::sqrt(34.0), 1e-12);
}

TEST(Quantize, ZeroBand) {
  const std::vector<double> x(6, 0.0);
  const auto b = pvq_quantize_band(x, {}, 2.0, 0.0);
  EXPECT_EQ(b.gain_index, 0);
  EXPECT_EQ(b.k, 0);
  for (double v : pvq_dequantize_band(b, {}, 2.0, 0.0)) EXPECT_EQ(v, 0.0);
}

TEST(Quantize, PerfectlyPredictedBand) {
  const std::vector<double> ref = {1, -2, 0.5, 3};
  std::vector<double> x;
  for (double v : ref) x.push_back(2.5 * v);
  const auto b = pvq_quantize_band(x, ref, 0.5, 0.0);
  EXPECT_TRUE(b.use_ref);
  EXPECT_EQ(b.theta_index, 0);
  EXPECT_EQ(b.k, 0);
  EXPECT_FALSE(b.ref_flip);
  const auto r = pvq_dequantize_band(b, ref, 0.5, 0.0);
  const double g = gain_expand(b.gain_index, 0.5, 0.0);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(r[i], g * ref[i] / norm(ref), 1e-9);
}

TEST(Quantize, NegatedReferenceUsesFlip) {
  const std::vector<double> ref = {1, 2, 3};
  const std::vector<double> x = {-1, -2, -3.1};
  const auto b = pvq_quantize_band(x, ref, 0.2, 0.0);
  EXPECT_TRUE(b.ref_flip);
  const auto r = pvq_dequantize_band(b, ref, 0.2, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r[i], x[i], 0.3);
}

TEST(Quantize, ErrorShrinksWithFinerSteps) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  const std::vector<double> qs = {64.0, 16.0, 4.0, 1.0, 0.25};
  std::vector<double> mean_ref(qs.size(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(12), ref(12);
    for (auto& v : x) v = 20 * nd(gen);
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = x[i] + 8 * nd(gen);
    double prev = 1e300;
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      const auto b = pvq_quantize_band(x, {}, qs[qi], 0.0);
      const auto y = pvq_dequantize_band(b, {}, qs[qi], 0.0);
      double e = 0;
      for (std::size_t i = 0; i < x.size(); ++i) e += (x[i] - y[i]) * (x[i] - y[i]);
      e = std::sqrt(e);
      if (qs[qi] <= 16.0) {
        EXPECT_LE(e, prev * 1.05 + 1e-9) << "q=" << qs[qi];
      }
      prev = e;

      const auto br = pvq_quantize_band(x, ref, qs[qi], 0.0);
      const auto yr = pvq_dequantize_band(br, ref, qs[qi], 0.0);
      double er = 0;
      for (std::size_t i = 0; i < x.size(); ++i) er += (x[i] - yr[i]) * (x[i] - yr[i]);
      mean_ref[qi] += std::sqrt(er) / 20;
    }
    EXPECT_LT(prev, 1.0);
  }
  // Reference mode: angular resolution bottoms out at pi/64, so only the
  // trend is checked, plus the floor itself.
  for (std::size_t qi = 1; qi < qs.size(); ++qi) EXPECT_LE(mean_ref[qi], mean_ref[qi - 1] * 1.02);
  EXPECT_LT(mean_ref.back(), 70 * std::sin(std::numbers::pi / 128) * 1.5);
}

TEST(Quantize, SearchBeatsProportionalRounding) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 3 + static_cast<int>(gen() % 200);
    std::vector<double> x(n);
    for (auto& v : x) v = 30 * nd(gen);
    const int k = 1 + static_cast<int>(gen() % 120);
    double l1 = 0;
    for (double v : x) l1 += std::abs(v);
    // Naive codebook point: floor of the L1-scaled magnitudes, remainder
    // to the largest fractional parts.
    std::vector<int> naive(n);
    std::vector<std::pair<double, int>> frac;
    int placed = 0;
    for (int i = 0; i < n; ++i) {
      const double t = k * std::abs(x[i]) / l1;
      naive[i] = static_cast<int>(std::floor(t));
      placed += naive[i];
      frac.emplace_back(t - naive[i], i);
    }
    std::sort(frac.rbegin(), frac.rend());
    for (int i = 0; placed < k; ++i, ++placed) ++naive[frac[i].second];
    const auto y = pvq_search(x, k);
    EXPECT_GE(oracle::pvq_objective(x, y), oracle::pvq_objective(x, naive) * (1 - 1e-12));
  }
}

TEST(Coding, RoundTripRandomBands) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::vector<BandContext> enc_bc(4), dec_bc(4);
  PulseContext enc_pc, dec_pc;
  struct Item {
    PvqBand band;
    std::vector<double> ref;
    double q;
    double alpha;
    int ctx;
  };
  std::vector<Item> items;
  entropy::RangeEncoder enc;
  for (int i = 0; i < 10000; ++i) {
    const int n = std::vector<int>{3, 12, 15, 48, 63}[gen() % 5];
    std::vector<double> x(n), ref;
    const double scale = std::exp(nd(gen) * 2);
    for (auto& v : x) v = scale * nd(gen);
    if (gen() % 2) {
      ref.resize(n);
      for (int j = 0; j < n; ++j) ref[j] = x[j] * (gen() % 2 ? 1 : -1) + scale * nd(gen);
    }
    const double q = 0.5 + (gen() % 100) / 10.0;
    const double alpha = gen() % 2 ? 0.0 : 1.0 / 3;
    const int ctx = static_cast<int>(gen() % 4);
    auto b = pvq_quantize_band(x, ref, q, alpha);
    encode_band(enc, b, !ref.empty(), q, alpha, enc_bc[ctx], enc_pc);
    items.push_back({std::move(b), std::move(ref), q, alpha, ctx});
  }
  const auto bytes = enc.finish();
  entropy::RangeDecoder dec(bytes);
  for (const auto& it : items) {
    const auto b = decode_band(dec, it.band.n, !it.ref.empty(), it.q, it.alpha, dec_bc[it.ctx], dec_pc);
    ASSERT_EQ(b, it.band);
    ASSERT_EQ(pvq_dequantize_band(b, it.ref, it.q, it.alpha), pvq_dequantize_band(it.band, it.ref, it.q, it.alpha));
  }
}

TEST(Coding, ZeroBandIsOneSymbol) {
  BandContext bc;
  PulseContext pc;
  PvqBand b;
  b.n = 12;
  b.pulses.assign(12, 0);
  int symbols = 0;
  struct Counter {
    int* n;
    void encode(const entropy::CdfTable&, int) { ++*n; }
    void encode_adaptive(entropy::CdfTable&, int) { ++*n; }
  } counter{&symbols};
  encode_band(counter, b, false, 1.0, 0.0, bc, pc);
  EXPECT_EQ(symbols, 1);
}

TEST(Coding, SingleNonzeroInFourDims) {
  BandContext bc;
  PulseContext pc;
  const std::vector<double> x = {0, 0, -1, 0};
  auto b = pvq_quantize_band(x, {}, 1.0, 0.0);
  ASSERT_EQ(b.k, 2);  // round(sqrt(7 / 2))
  int symbols = 0;
  struct Counter {
    int* n;
    void encode(const entropy::CdfTable&, int) { ++*n; }
    void encode_adaptive(entropy::CdfTable&, int) { ++*n; }
  } counter{&symbols};
  encode_band(counter, b, false, 1.0, 0.0, bc, pc);
  // gain + split at n=4 + split at n=2 + sign.
  EXPECT_EQ(symbols, 4);
}

TEST(Coding, TruncatedBandThrows) {
  BandContext bc;
  PulseContext pc;
  entropy::RangeEncoder enc;
  std::vector<double> x(48);
  for (int i = 0; i < 48; ++i) x[i] = 100.0 * std::sin(i * 1.7);
  const auto b = pvq_quantize_band(x, {}, 0.5, 0.0);
  encode_band(enc, b, false, 0.5, 0.0, bc, pc);
  auto bytes = enc.finish();
  bytes.resize(bytes.size() / 3);
  BandContext dbc;
  PulseContext dpc;
  entropy::RangeDecoder dec(bytes);
  EXPECT_THROW(decode_band(dec, 48, false, 0.5, 0.0, dbc, dpc), TruncatedStream);
}
