#pragma once

#include <bit>
#include <cstdint>

namespace scenewise {

// IEEE 754 binary16 conversions, round-to-nearest-even. Values beyond the
// half range saturate to +/-65504 and set *saturated when provided.

inline uint16_t float_to_half(float f, bool* saturated = nullptr) {
  uint32_t x = std::bit_cast<uint32_t>(f);
  uint32_t sign = (x >> 16) & 0x8000u;
  uint32_t mant = x & 0x007fffffu;
  int exp = static_cast<int>((x >> 23) & 0xffu);

  if (exp == 0xff) {
    if (mant != 0) return static_cast<uint16_t>(sign | 0x7e00u);  // quiet NaN
    if (saturated != nullptr) *saturated = true;
    return static_cast<uint16_t>(sign | 0x7bffu);
  }

  int e = exp - 127 + 15;
  if (e >= 31) {
    if (saturated != nullptr) *saturated = true;
    return static_cast<uint16_t>(sign | 0x7bffu);
  }
  if (e <= 0) {
    if (e < -10) return static_cast<uint16_t>(sign);  // underflows to zero
    mant |= 0x00800000u;
    uint32_t shift = static_cast<uint32_t>(14 - e);
    uint32_t half = mant >> shift;
    uint32_t rem = mant & ((1u << shift) - 1u);
    uint32_t halfway = 1u << (shift - 1u);
    if (rem > halfway || (rem == halfway && (half & 1u))) half++;
    return static_cast<uint16_t>(sign | half);
  }

  uint32_t half = sign | (static_cast<uint32_t>(e) << 10) | (mant >> 13);
  uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) {
    half++;
    if ((half & 0x7fffu) >= 0x7c00u) {  // rounded past max finite
      if (saturated != nullptr) *saturated = true;
      half = sign | 0x7bffu;
    }
  }
  return static_cast<uint16_t>(half);
}

inline float half_to_float(uint16_t h) {
  uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
  uint32_t exp = (h >> 10) & 0x1fu;
  uint32_t mant = h & 0x3ffu;
  uint32_t x;
  if (exp == 0) {
    if (mant == 0) {
      x = sign;
    } else {
      int e = -1;
      do {
        mant <<= 1;
        ++e;
      } while ((mant & 0x400u) == 0);
      x = sign | (static_cast<uint32_t>(127 - 15 - e) << 23) |
          ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 31) {
    x = sign | 0x7f800000u | (mant << 13);
  } else {
    x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(x);
}

inline float quantize_half(float f, bool* saturated = nullptr) {
  return half_to_float(float_to_half(f, saturated));
}

}  // namespace scenewise
