#pragma once

// Frequency-domain prediction: H/V intra copy of the neighbour's first
// coefficient row or column, chroma-from-luma reference blocks, and the
// superblock-root DC predictor.

#include <cstdint>
#include <optional>

#include "dkf/error.hpp"
#include "dkf/image.hpp"
#include "dkf/transform.hpp"

namespace dkf::predict {

using transform::CoeffBlock;

enum class IntraMode : std::uint8_t { kNone = 0, kHorizontal = 1, kVertical = 2 };
inline constexpr int kIntraModes = 3;

// Vertical copies the row of horizontal frequencies from the block above,
// Horizontal copies the column of vertical frequencies from the block to
// the left.  DC is never predicted here.
inline CoeffBlock intra_predict(IntraMode mode, const CoeffBlock* left, const CoeffBlock* above, int size) {
  CoeffBlock out(size);
  switch (mode) {
    case IntraMode::kNone:
      break;
    case IntraMode::kVertical:
      require(above != nullptr && above->size == size, "intra_predict: vertical needs a same-size block above");
      for (int u = 1; u < size; ++u) out.at(u, 0) = above->at(u, 0);
      break;
    case IntraMode::kHorizontal:
      require(left != nullptr && left->size == size, "intra_predict: horizontal needs a same-size block to the left");
      for (int v = 1; v < size; ++v) out.at(0, v) = left->at(0, v);
      break;
  }
  return out;
}

// Reference for a chroma block from the co-located reconstructed luma
// coefficients.  Under 4:2:0 only a luma block of exactly twice the chroma
// size lines up; its low chroma_size x chroma_size quadrant is used.  Any
// other arrangement yields an all-zero reference.
inline CoeffBlock cfl_reference(const CoeffBlock* luma, int chroma_size, Subsampling ss) {
  CoeffBlock ref(chroma_size);
  if (luma == nullptr) return ref;
  const int need = ss == Subsampling::k420 ? 2 * chroma_size : chroma_size;
  if (luma->size != need) return ref;
  for (int v = 0; v < chroma_size; ++v)
    for (int u = 0; u < chroma_size; ++u) ref.at(u, v) = luma->at(u, v);
  ref.at(0, 0) = 0;
  return ref;
}

// Superblock-root DC predictor in the centred coding domain, where 0 is
// mid-gray.  Mean of the available neighbours, rounded toward -inf.
inline std::int32_t dc_predict(std::optional<std::int32_t> left, std::optional<std::int32_t> above) {
  if (left && above) return (*left + *above) >> 1;
  if (left) return *left;
  if (above) return *above;
  return 0;
}

}  // namespace dkf::predict
