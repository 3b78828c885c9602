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

#ifndef FLAG_LWE_HPP_
#define FLAG_LWE_HPP_

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "flag/chacha_rng.hpp"

namespace flag {

using Residue = std::uint64_t;
using Level = std::int64_t;

// Gradient levels are embedded in Z_q as multiples of q / 2^b, so the
// plaintext scaling is purely integer and decryption is exact: the usual
// LWE error term is replaced by the dither randomness of the quantizer.
//
// (n, m, q, b): secret dimension, ciphertext/bucket dimension, modulus,
// quantization bits. Moduli up to 2^32 are supported; entry products fit
// in 64 bits and row accumulations stay below 2^63 for n < 2^31.
struct LweParams {
  std::size_t n = 256;
  std::size_t m = 768;
  Residue q = 65536;
  int b = 6;

  // Exact plaintext step q / 2^b.
  Residue step() const { return q >> static_cast<unsigned>(b); }

  Level max_level() const { return Level{1} << (b - 1); }

  void check() const {
    if (n < 1 || m < 1) throw std::invalid_argument("n and m must be positive");
    if (b < 1 || b > 31) throw std::invalid_argument("b must be in [1, 31]");
    if (q > (Residue{1} << 32)) throw std::invalid_argument("q above 2^32 is unsupported");
    const Residue two_b = Residue{1} << static_cast<unsigned>(b);
    if (two_b >= q) throw std::invalid_argument("2^b must be smaller than q");
    if (q % two_b != 0) {
      throw std::invalid_argument("q must be divisible by 2^b, got q=" + std::to_string(q) +
                                  ", b=" + std::to_string(b));
    }
  }
};

struct PublicMatrix {
  std::size_t rows = 0;  // m
  std::size_t cols = 0;  // n
  std::vector<Residue> entries;  // row-major

  Residue at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
};

struct SecretKey {
  std::vector<Residue> entries;
};

struct Ciphertext {
  std::vector<Residue> entries;
};

using LevelVector = std::vector<Level>;

// Centered representative of x mod q: x for x <= q/2, else x - q. The
// boundary q/2 decodes to +q/2, which pins down the sign of the extreme
// quantization level 2^{b-1}.
inline Level decode_centered(Residue x, Residue q) {
  if (x >= q) throw std::invalid_argument("residue not reduced mod q");
  if (x <= q / 2) return static_cast<Level>(x);
  return static_cast<Level>(x) - static_cast<Level>(q);
}

// Counter-mode expansion of the seed into an m x n matrix over Z_q.
// Entries are rejection-sampled from ceil(log2 q)-bit keystream chunks
// (a no-op when q is a power of two), so server and clients reproduce
// the matrix bit-identically from the 32-byte seed.
inline PublicMatrix expand_public_matrix(const Seed& seed, const LweParams& params) {
  params.check();
  constexpr std::uint32_t kMatrixDomain = 0x4d415458u;  // "MATX"
  ChaChaRng stream(seed, 0, kMatrixDomain);
  PublicMatrix matrix;
  matrix.rows = params.m;
  matrix.cols = params.n;
  matrix.entries.resize(params.m * params.n);
  for (auto& e : matrix.entries) e = stream.uniform_below(params.q);
  return matrix;
}

inline SecretKey sample_secret(ChaChaRng& rng, const LweParams& params) {
  params.check();
  SecretKey key;
  key.entries.resize(params.n);
  for (auto& e : key.entries) e = rng.uniform_below(params.q);
  return key;
}

// A * s mod q. Computed once per (matrix, key) pair and reused across all
// buckets of a round; encryption itself is then O(m) per bucket.
inline std::vector<Residue> mask_from_key(const PublicMatrix& matrix, const SecretKey& key,
                                          Residue q) {
  if (matrix.cols != key.entries.size()) {
    throw std::invalid_argument("secret key length does not match matrix columns");
  }
  std::vector<Residue> mask(matrix.rows);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    const Residue* row = matrix.entries.data() + r * matrix.cols;
    Residue acc = 0;
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      acc += (row[c] * key.entries[c]) % q;  // terms < q; sum < n * q < 2^63
    }
    mask[r] = acc % q;
  }
  return mask;
}

inline Residue level_to_residue(Level k, const LweParams& params) {
  const Level two_b = Level{1} << static_cast<unsigned>(params.b);
  Level reduced = ((k % two_b) + two_b) % two_b;
  return (static_cast<Residue>(reduced) * params.step()) % params.q;
}

// ct = A*s + k * (q / 2^b) mod q. No error term: the quantization dither
// already plays that role.
inline Ciphertext encrypt_with_mask(const std::vector<Residue>& mask, const LevelVector& levels,
                                    const LweParams& params) {
  if (levels.size() != params.m || mask.size() != params.m) {
    throw std::invalid_argument("level vector length does not match m");
  }
  Ciphertext ct;
  ct.entries.resize(params.m);
  for (std::size_t j = 0; j < params.m; ++j) {
    if (std::llabs(levels[j]) > params.max_level()) {
      throw std::invalid_argument("quantization level out of range at index " +
                                  std::to_string(j));
    }
    ct.entries[j] = (mask[j] + level_to_residue(levels[j], params)) % params.q;
  }
  return ct;
}

inline Ciphertext encrypt(const LweParams& params, const PublicMatrix& matrix,
                          const SecretKey& key, const LevelVector& levels) {
  params.check();
  return encrypt_with_mask(mask_from_key(matrix, key, params.q), levels, params);
}

inline Ciphertext add_ciphertexts(const Ciphertext& a, const Ciphertext& b, Residue q) {
  if (a.entries.size() != b.entries.size()) {
    throw std::invalid_argument("ciphertext dimension mismatch");
  }
  Ciphertext out;
  out.entries.resize(a.entries.size());
  for (std::size_t j = 0; j < a.entries.size(); ++j) {
    out.entries[j] = (a.entries[j] + b.entries[j]) % q;
  }
  return out;
}

// Removes the mask A * s_sum and decodes each residue into the centered
// range (-q/2, q/2], then divides by the plaintext step. A residue that is
// not an exact multiple of the step can only come from a corrupted
// ciphertext or mismatched parameters, so that is an error rather than a
// rounding case.
inline LevelVector decrypt_with_mask(const std::vector<Residue>& mask, const Ciphertext& ct,
                                     const LweParams& params) {
  if (ct.entries.size() != params.m || mask.size() != params.m) {
    throw std::invalid_argument("ciphertext length does not match m");
  }
  const Residue step = params.step();
  LevelVector levels(params.m);
  for (std::size_t j = 0; j < params.m; ++j) {
    Residue r = (ct.entries[j] + params.q - mask[j]) % params.q;
    if (r % step != 0) {
      throw std::runtime_error("residue not divisible by plaintext step at index " +
                               std::to_string(j));
    }
    levels[j] = decode_centered(r, params.q) / static_cast<Level>(step);
  }
  return levels;
}

inline LevelVector decrypt(const LweParams& params, const PublicMatrix& matrix,
                           const SecretKey& key_sum, const Ciphertext& ct) {
  params.check();
  return decrypt_with_mask(mask_from_key(matrix, key_sum, params.q), ct, params);
}

// CPA-proof constraints are reported as warnings, not errors: the
// experimental parameters in common use violate them on purpose and rely
// on concrete bit-security estimates instead.
inline std::vector<std::string> validate_params(const LweParams& params,
                                                bool check_cpa_constraints = true) {
  params.check();
  std::vector<std::string> warnings;
  if (!check_cpa_constraints) return warnings;

  const double n = static_cast<double>(params.n);
  const double m = static_cast<double>(params.m);
  const double q = static_cast<double>(params.q);

  if (m < 3.0 * n) {
    warnings.push_back("m < 3n: uniform-error hardness reduction needs m >= 3n");
  }
  const double uniform_width = q / std::pow(2.0, params.b + 1);
  const double width_floor = 2.0 * std::sqrt(n) * m;
  if (uniform_width < width_floor) {
    warnings.push_back("q/2^{b+1} = " + std::to_string(uniform_width) +
                       " below 2*sqrt(n)*m = " + std::to_string(width_floor));
  }
  const double q_floor = std::pow(2.0, params.b + 2) * std::pow(m, 1.5) / std::sqrt(3.0);
  if (q < q_floor) {
    warnings.push_back("q = " + std::to_string(params.q) +
                       " below 2^{b+2} m^{3/2} / sqrt(3) = " + std::to_string(q_floor));
  }
  return warnings;
}

}  // namespace flag

#endif  // FLAG_LWE_HPP_
