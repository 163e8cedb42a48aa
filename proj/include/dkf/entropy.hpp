#pragma once

// Multi-symbol adaptive range coder.
//
// Every CDF is scaled to a fixed total t = 2^15 and the coder range R is
// renormalized into [2^15, 2^16), so t <= R < 2t holds at every step and the
// multiply-free partition functions below are applicable.  Two partition
// functions are supported; the choice is fixed per stream.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dkf/error.hpp"

namespace dkf::entropy {

inline constexpr int kProbBits = 15;
inline constexpr std::uint32_t kTotal = 1u << kProbBits;
inline constexpr int kMaxSymbols = 16;
inline constexpr int kDefaultRate = 5;

enum class PartitionKind : std::uint8_t { kLegacy = 0, kReducedOverhead = 1 };

// Reduced-overhead mapping: slope 2 up to e, then 3/2 until the doubled
// budget R - t is used up, then slope 1.
inline std::uint32_t partition_reduced(std::uint32_t x, std::uint32_t t, std::uint32_t r) {
  require(x <= t && t <= r && r <= 2 * t, "partition_reduced: need 0 <= x <= t <= R <= 2t");
  const std::uint32_t e = 2 * r > 3 * t ? 2 * r - 3 * t : 0;
  const std::uint32_t over = x > e ? x - e : 0;
  return x + std::min(x, e) + std::min(over / 2, r - t);
}

// Piecewise-linear mapping: the first R - t units of the CDF get width 2,
// the rest width 1.
inline std::uint32_t partition_legacy(std::uint32_t x, std::uint32_t t, std::uint32_t r) {
  require(x <= t && t <= r && r <= 2 * t, "partition_legacy: need 0 <= x <= t <= R <= 2t");
  return x + std::min(x, r - t);
}

inline std::uint32_t partition(PartitionKind kind, std::uint32_t x, std::uint32_t t, std::uint32_t r) {
  return kind == PartitionKind::kReducedOverhead ? partition_reduced(x, t, r) : partition_legacy(x, t, r);
}

// Adaptive cumulative distribution over n_symbols <= 16 outcomes with total
// kTotal.  cum[0] = 0, cum[n] = kTotal, strictly increasing.
class CdfTable {
 public:
  CdfTable() : CdfTable(2) {}

  explicit CdfTable(int n_symbols, int rate = kDefaultRate) : n_(n_symbols), rate_(rate) {
    require(n_symbols >= 2 && n_symbols <= kMaxSymbols, "CdfTable: symbol count must be in [2,16]");
    for (int i = 0; i <= n_; ++i) cum_[i] = static_cast<std::uint16_t>((kTotal * static_cast<std::uint32_t>(i)) / n_);
  }

  // Quantizes arbitrary non-negative weights, giving every symbol at least 1.
  static CdfTable from_weights(std::span<const double> weights, int rate = kDefaultRate) {
    const int n = static_cast<int>(weights.size());
    CdfTable cdf(n, rate);
    double sum = 0;
    for (double w : weights) {
      require(w >= 0 && std::isfinite(w), "CdfTable::from_weights: weights must be finite and >= 0");
      sum += w;
    }
    std::array<std::int64_t, kMaxSymbols> freq{};
    std::int64_t total = 0;
    for (int i = 0; i < n; ++i) {
      const double p = sum > 0 ? weights[i] / sum : 1.0 / n;
      freq[i] = std::max<std::int64_t>(1, std::llround(p * kTotal));
      total += freq[i];
    }
    // Absorb the rounding surplus/deficit in the largest bins.
    while (total != kTotal) {
      auto* it = std::max_element(freq.begin(), freq.begin() + n);
      if (total > kTotal) {
        const std::int64_t take = std::min<std::int64_t>(total - kTotal, *it - 1);
        *it -= take;
        total -= take;
      } else {
        *it += kTotal - total;
        total = kTotal;
      }
    }
    std::uint32_t acc = 0;
    cdf.cum_[0] = 0;
    for (int i = 0; i < n; ++i) {
      acc += static_cast<std::uint32_t>(freq[i]);
      cdf.cum_[i + 1] = static_cast<std::uint16_t>(acc);
    }
    return cdf;
  }

  int size() const { return n_; }
  int rate() const { return rate_; }
  std::uint32_t total() const { return kTotal; }

  std::uint32_t cum(int i) const { return cum_[i]; }
  std::uint32_t freq(int s) const { return cum(s + 1) - cum(s); }

  // Exponential-decay update toward the observed symbol.  Boundaries at or
  // below s move toward i, boundaries above s toward t - (n - i), which keeps
  // every frequency >= 1.  The step is |target - cum| >> rate, rounded toward
  // zero, so rate >= 15 leaves the table unchanged.
  void adapt(int s) {
    require(s >= 0 && s < n_, "CdfTable::adapt: symbol out of range");
    for (int i = 1; i < n_; ++i) {
      const std::int32_t c = cum_[i];
      if (i <= s) {
        const std::int32_t target = i;
        cum_[i] = static_cast<std::uint16_t>(c - ((c - target) >> rate_));
      } else {
        const std::int32_t target = static_cast<std::int32_t>(kTotal) - (n_ - i);
        cum_[i] = static_cast<std::uint16_t>(c + ((target - c) >> rate_));
      }
    }
  }

  bool valid() const {
    if (cum(0) != 0 || cum(n_) != kTotal) return false;
    for (int i = 0; i < n_; ++i)
      if (cum(i + 1) <= cum(i)) return false;
    return true;
  }

  friend bool operator==(const CdfTable& a, const CdfTable& b) {
    if (a.n_ != b.n_ || a.rate_ != b.rate_) return false;
    return std::equal(a.cum_.begin(), a.cum_.begin() + a.n_ + 1, b.cum_.begin());
  }

 private:
  int n_;
  int rate_;
  std::array<std::uint16_t, kMaxSymbols + 1> cum_{};
};

// Fixed uniform table over n in [2,16] symbols.
inline const CdfTable& uniform_cdf(int n) {
  static const std::array<CdfTable, kMaxSymbols + 1> tables = [] {
    std::array<CdfTable, kMaxSymbols + 1> t{};
    for (int i = 2; i <= kMaxSymbols; ++i) t[i] = CdfTable(i);
    return t;
  }();
  require(n >= 2 && n <= kMaxSymbols, "uniform_cdf: symbol count must be in [2,16]");
  return tables[n];
}

inline int renorm_shift(std::uint32_t rng) { return kProbBits - (std::bit_width(rng) - 1); }

// ---------------------------------------------------------------------------

class RangeEncoder {
 public:
  explicit RangeEncoder(PartitionKind kind = PartitionKind::kReducedOverhead) : kind_(kind) {}

  PartitionKind kind() const { return kind_; }

  void encode(const CdfTable& cdf, int s) {
    require(s >= 0 && s < cdf.size(), "RangeEncoder::encode: symbol out of range");
    const std::uint32_t lo = partition(kind_, cdf.cum(s), kTotal, rng_);
    const std::uint32_t hi = partition(kind_, cdf.cum(s + 1), kTotal, rng_);
    low_ += lo;
    rng_ = hi - lo;
    const int d = renorm_shift(rng_);
    rng_ <<= d;
    low_ <<= d;
    pending_bits_ += d;
    while (pending_bits_ >= 8) {
      pending_bits_ -= 8;
      const int shift = pending_bits_ + 16;
      push_byte(static_cast<std::uint32_t>(low_ >> shift));
      low_ &= (std::uint64_t{1} << shift) - 1;
    }
  }

  void encode_adaptive(CdfTable& cdf, int s) {
    encode(cdf, s);
    cdf.adapt(s);
  }

  // Emits the rest of low so the decoder, which reads 16 bits ahead, finds
  // exactly the bytes it needs.
  std::vector<std::uint8_t> finish() {
    const int pad = (8 - pending_bits_) & 7;
    low_ <<= pad + 16;
    pending_bits_ += pad + 16;
    while (pending_bits_ >= 8) {
      pending_bits_ -= 8;
      const int shift = pending_bits_ + 16;
      push_byte(static_cast<std::uint32_t>(low_ >> shift));
      low_ &= (std::uint64_t{1} << shift) - 1;
    }
    release(0);
    return std::move(out_);
  }

  std::size_t bytes_written() const { return out_.size(); }

 private:
  // Carry resolution: a run of 0xFF bytes stays pending until a byte below
  // 0xFF (no carry can pass it) or a carry arrives.
  void push_byte(std::uint32_t c) {
    if (c < 0xFF) {
      release(0);
      cache_ = static_cast<int>(c);
    } else if (c == 0xFF) {
      ++pending_ff_;
    } else {
      release(1);
      cache_ = static_cast<int>(c & 0xFF);
    }
  }

  void release(int carry) {
    if (cache_ >= 0) {
      if (cache_ + carry > 0xFF) throw ContractError("RangeEncoder: carry overflow");
      out_.push_back(static_cast<std::uint8_t>(cache_ + carry));
    } else if (carry) {
      throw ContractError("RangeEncoder: carry with no pending byte");
    }
    for (; pending_ff_ > 0; --pending_ff_) out_.push_back(static_cast<std::uint8_t>(0xFF + carry));
    cache_ = -1;
  }

  PartitionKind kind_;
  std::uint64_t low_ = 0;
  std::uint32_t rng_ = 0xFFFF;
  int pending_bits_ = 0;
  int cache_ = -1;
  std::size_t pending_ff_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(std::span<const std::uint8_t> bytes, PartitionKind kind = PartitionKind::kReducedOverhead)
      : kind_(kind), bytes_(bytes) {
    dif_ = read_bits(16);
    if (dif_ >= rng_) throw FormatError("range decoder: corrupt stream start");
  }

  PartitionKind kind() const { return kind_; }

  int decode(const CdfTable& cdf) {
    const int n = cdf.size();
    int s = 0;
    std::uint32_t lo = 0;
    for (int k = 1; k < n; ++k) {
      const std::uint32_t b = partition(kind_, cdf.cum(k), kTotal, rng_);
      if (b > dif_) break;
      s = k;
      lo = b;
    }
    const std::uint32_t hi = partition(kind_, cdf.cum(s + 1), kTotal, rng_);
    dif_ -= lo;
    rng_ = hi - lo;
    const int d = renorm_shift(rng_);
    rng_ <<= d;
    dif_ = (dif_ << d) | read_bits(d);
    return s;
  }

  int decode_adaptive(CdfTable& cdf) {
    const int s = decode(cdf);
    cdf.adapt(s);
    return s;
  }

  std::size_t bytes_consumed() const { return pos_; }

 private:
  std::uint32_t read_bits(int n) {
    while (avail_ < n) {
      if (pos_ >= bytes_.size()) throw TruncatedStream("range decoder: stream exhausted");
      window_ = (window_ << 8) | bytes_[pos_++];
      avail_ += 8;
    }
    avail_ -= n;
    const std::uint32_t v = static_cast<std::uint32_t>(window_ >> avail_) & ((1u << n) - 1);
    window_ &= (std::uint64_t{1} << avail_) - 1;
    return v;
  }

  PartitionKind kind_;
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t window_ = 0;
  int avail_ = 0;
  std::uint32_t dif_ = 0;
  std::uint32_t rng_ = 0xFFFF;
};

// Encoder stand-in for rate estimation: accumulates the ideal code length
// -log2(p) and adapts tables exactly like the real encoder.
class BitCounter {
 public:
  void encode(const CdfTable& cdf, int s) { bits_ += cost(cdf, s); }
  void encode_adaptive(CdfTable& cdf, int s) {
    encode(cdf, s);
    cdf.adapt(s);
  }
  double bits() const { return bits_; }

  static double cost(const CdfTable& cdf, int s) {
    return kProbBits - std::log2(static_cast<double>(cdf.freq(s)));
  }

 private:
  double bits_ = 0;
};

// ---------------------------------------------------------------------------
// Overhead of the coder relative to the ideal code length under the same
// static model.

struct OverheadResult {
  double actual_bits = 0;
  double shannon_bits = 0;
  // (actual - shannon) / shannon; when shannon_bits == 0 (certain symbol),
  // the absolute actual_bits is reported instead.
  double overhead = 0;
};

inline OverheadResult measure_overhead(std::span<const double> probabilities, std::size_t n, PartitionKind kind,
                                       std::uint64_t seed = 1) {
  const CdfTable cdf = CdfTable::from_weights(probabilities, kProbBits);
  // Sample from the quantized table so the model matches the source exactly.
  std::vector<double> q(cdf.size());
  for (int s = 0; s < cdf.size(); ++s) q[s] = cdf.freq(s);
  std::mt19937_64 gen(seed);
  std::discrete_distribution<int> dist(q.begin(), q.end());

  RangeEncoder enc(kind);
  OverheadResult r;
  for (std::size_t i = 0; i < n; ++i) {
    const int s = dist(gen);
    r.shannon_bits += BitCounter::cost(cdf, s);
    enc.encode(cdf, s);
  }
  r.actual_bits = 8.0 * static_cast<double>(enc.finish().size());
  r.overhead = r.shannon_bits > 0 ? (r.actual_bits - r.shannon_bits) / r.shannon_bits : r.actual_bits;
  return r;
}

// Degenerate single-outcome stream support: a 2-symbol table with nearly
// all mass on the first symbol.
inline CdfTable certain_cdf() {
  const double w[2] = {1.0, 0.0};
  return CdfTable::from_weights(w, kProbBits);
}

}  // namespace dkf::entropy
