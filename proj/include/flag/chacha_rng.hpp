// Copyright 2026 the FLAG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLAG_CHACHA_RNG_HPP_
#define FLAG_CHACHA_RNG_HPP_

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace flag {

// 32-byte seed plus the identifier of the expansion function it feeds.
// Identical (bytes, algorithm_id) always yields an identical keystream,
// which is what lets server and clients expand the same public matrix
// from a short seed instead of shipping the matrix itself.
struct Seed {
  std::array<std::uint8_t, 32> bytes{};
  std::string algorithm_id = "chacha20";
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Expands a short integer seed into a full 32-byte key. Convenience for
// configs that carry a single u64 per stream.
inline Seed make_seed(std::uint64_t value) {
  Seed seed;
  std::uint64_t state = value;
  for (int word = 0; word < 4; ++word) {
    std::uint64_t w = splitmix64(state);
    for (int i = 0; i < 8; ++i) {
      seed.bytes[static_cast<std::size_t>(word * 8 + i)] =
          static_cast<std::uint8_t>(w >> (8 * i));
    }
  }
  return seed;
}

namespace detail {

inline std::uint32_t rotl32(std::uint32_t x, int k) {
  return (x << k) | (x >> (32 - k));
}

inline void chacha_quarter_round(std::uint32_t& a, std::uint32_t& b,
                                 std::uint32_t& c, std::uint32_t& d) {
  a += b; d ^= a; d = rotl32(d, 16);
  c += d; b ^= c; b = rotl32(b, 12);
  a += b; d ^= a; d = rotl32(d, 8);
  c += d; b ^= c; b = rotl32(b, 7);
}

// One ChaCha20 block (RFC 8439): 32-byte key, 32-bit block counter,
// 12-byte nonce -> 64 bytes of keystream.
inline void chacha20_block(const std::array<std::uint8_t, 32>& key,
                           std::uint32_t counter,
                           const std::array<std::uint32_t, 3>& nonce,
                           std::uint8_t out[64]) {
  std::array<std::uint32_t, 16> state;
  state[0] = 0x61707865u;
  state[1] = 0x3320646eu;
  state[2] = 0x79622d32u;
  state[3] = 0x6b206574u;
  for (int i = 0; i < 8; ++i) {
    state[static_cast<std::size_t>(4 + i)] =
        static_cast<std::uint32_t>(key[static_cast<std::size_t>(4 * i)]) |
        (static_cast<std::uint32_t>(key[static_cast<std::size_t>(4 * i + 1)]) << 8) |
        (static_cast<std::uint32_t>(key[static_cast<std::size_t>(4 * i + 2)]) << 16) |
        (static_cast<std::uint32_t>(key[static_cast<std::size_t>(4 * i + 3)]) << 24);
  }
  state[12] = counter;
  state[13] = nonce[0];
  state[14] = nonce[1];
  state[15] = nonce[2];

  std::array<std::uint32_t, 16> x = state;
  for (int round = 0; round < 10; ++round) {
    chacha_quarter_round(x[0], x[4], x[8], x[12]);
    chacha_quarter_round(x[1], x[5], x[9], x[13]);
    chacha_quarter_round(x[2], x[6], x[10], x[14]);
    chacha_quarter_round(x[3], x[7], x[11], x[15]);
    chacha_quarter_round(x[0], x[5], x[10], x[15]);
    chacha_quarter_round(x[1], x[6], x[11], x[12]);
    chacha_quarter_round(x[2], x[7], x[8], x[13]);
    chacha_quarter_round(x[3], x[4], x[9], x[14]);
  }
  for (int i = 0; i < 16; ++i) {
    std::uint32_t word = x[static_cast<std::size_t>(i)] + state[static_cast<std::size_t>(i)];
    out[4 * i] = static_cast<std::uint8_t>(word);
    out[4 * i + 1] = static_cast<std::uint8_t>(word >> 8);
    out[4 * i + 2] = static_cast<std::uint8_t>(word >> 16);
    out[4 * i + 3] = static_cast<std::uint8_t>(word >> 24);
  }
}

}  // namespace detail

// Deterministic random stream over a ChaCha20 keystream. The nonce acts as
// a stream id, so many independent streams can be derived from one seed
// (per client, per purpose) without correlation. All draws are bit-exact
// functions of (seed, stream_id, draw index) on every platform.
class ChaChaRng {
 public:
  ChaChaRng() : ChaChaRng(Seed{}, 0) {}

  ChaChaRng(const Seed& seed, std::uint64_t stream_id, std::uint32_t domain = 0)
      : key_(seed.bytes) {
    if (seed.algorithm_id != "chacha20") {
      throw std::invalid_argument("unsupported seed expansion algorithm: " +
                                  seed.algorithm_id);
    }
    nonce_[0] = domain;
    nonce_[1] = static_cast<std::uint32_t>(stream_id);
    nonce_[2] = static_cast<std::uint32_t>(stream_id >> 32);
  }

  std::uint8_t next_byte() {
    if (pos_ == 64) refill();
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(next_byte()) << (8 * i);
    }
    return v;
  }

  // Next `width` bits of the keystream, LSB-first within bytes. Shares the
  // bit-order convention of the wire format so matrix expansion and
  // ciphertext packing read the same way.
  std::uint64_t next_bits(int width) {
    if (width < 1 || width > 57) throw std::invalid_argument("bit width out of range");
    while (bits_held_ < width) {
      bit_buffer_ |= static_cast<std::uint64_t>(next_byte()) << bits_held_;
      bits_held_ += 8;
    }
    std::uint64_t value = bit_buffer_ & ((width == 64) ? ~0ULL : ((1ULL << width) - 1));
    bit_buffer_ >>= width;
    bits_held_ -= width;
    return value;
  }

  // Uniform residue in [0, bound) by rejection sampling of
  // ceil(log2 bound)-bit chunks; the rejection loop never triggers when
  // bound is a power of two.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound < 2) return 0;
    const int width = std::bit_width(bound - 1);
    for (;;) {
      std::uint64_t v = next_bits(width);
      if (v < bound) return v;
    }
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform dither on (-1/2, 1/2] in quantizer level units.
  double dither() { return 0.5 - uniform_real(); }

  // Standard normal via Box-Muller, deterministic given the stream.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform_real();  // (0, 1]
    double u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(angle);
    have_cached_ = true;
    return r * std::cos(angle);
  }

 private:
  void refill() {
    detail::chacha20_block(key_, counter_++, nonce_, block_);
    pos_ = 0;
  }

  std::array<std::uint8_t, 32> key_;
  std::array<std::uint32_t, 3> nonce_{};
  std::uint32_t counter_ = 0;
  std::uint8_t block_[64]{};
  int pos_ = 64;
  std::uint64_t bit_buffer_ = 0;
  int bits_held_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace flag

#endif  // FLAG_CHACHA_RNG_HPP_
