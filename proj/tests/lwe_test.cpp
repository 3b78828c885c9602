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

#include "flag/lwe.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support/stats.hpp"

namespace flag {
namespace {

LweParams small_params() {
  LweParams params;
  params.n = 16;
  params.m = 48;
  params.q = 4096;
  params.b = 4;
  return params;
}

LevelVector random_levels(ChaChaRng& rng, std::size_t m, Level max_level) {
  LevelVector k(m);
  for (auto& v : k) {
    v = static_cast<Level>(rng.uniform_below(2 * static_cast<std::uint64_t>(max_level) + 1)) -
        max_level;
  }
  return k;
}

TEST(LweParams, ChecksStructuralInvariants) {
  EXPECT_NO_THROW(LweParams{}.check());
  LweParams bad = small_params();
  bad.q = 65537;  // 2^b does not divide q
  bad.b = 6;
  EXPECT_THROW(bad.check(), std::invalid_argument);
  bad = small_params();
  bad.b = 13;  // 2^13 >= q
  EXPECT_THROW(bad.check(), std::invalid_argument);
  bad = small_params();
  bad.n = 0;
  EXPECT_THROW(bad.check(), std::invalid_argument);
}

TEST(ExpandPublicMatrix, Deterministic) {
  const LweParams params;
  const Seed seed = make_seed(101);
  const PublicMatrix a = expand_public_matrix(seed, params);
  const PublicMatrix b = expand_public_matrix(seed, params);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_EQ(a.rows, params.m);
  EXPECT_EQ(a.cols, params.n);
}

TEST(ExpandPublicMatrix, SeedSensitivity) {
  const LweParams params = small_params();
  Seed s0 = make_seed(101);
  Seed s1 = s0;
  s1.bytes[5] ^= 1;
  const PublicMatrix a = expand_public_matrix(s0, params);
  const PublicMatrix b = expand_public_matrix(s1, params);
  EXPECT_NE(a.entries, b.entries);
}

TEST(ExpandPublicMatrix, RejectsUnknownAlgorithm) {
  Seed seed = make_seed(101);
  seed.algorithm_id = "sha256-ctr";
  EXPECT_THROW(expand_public_matrix(seed, small_params()), std::invalid_argument);
}

TEST(ExpandPublicMatrix, EntriesUniformChiSquare) {
  const LweParams params;  // 768 x 256 = 196608 samples >= 1e5
  const PublicMatrix a = expand_public_matrix(make_seed(2026), params);
  std::vector<std::size_t> counts(16, 0);
  for (const Residue e : a.entries) {
    ASSERT_LT(e, params.q);
    ++counts[static_cast<std::size_t>(e * counts.size() / params.q)];
  }
  EXPECT_GT(testing::chi_square_uniform_pvalue(counts), 1e-6);
}

TEST(ExpandPublicMatrix, NonPowerOfTwoModulusUniform) {
  LweParams params = small_params();
  params.q = 3 * 1024;  // rejection sampling active
  params.m = 512;
  params.n = 256;
  const PublicMatrix a = expand_public_matrix(make_seed(7), params);
  std::vector<std::size_t> counts(16, 0);
  for (const Residue e : a.entries) {
    ASSERT_LT(e, params.q);
    ++counts[static_cast<std::size_t>(e * counts.size() / params.q)];
  }
  EXPECT_GT(testing::chi_square_uniform_pvalue(counts), 1e-6);
}

TEST(SampleSecret, DeterministicAndDistinct) {
  const LweParams params = small_params();
  ChaChaRng r1(make_seed(5), 0);
  ChaChaRng r2(make_seed(5), 0);
  ChaChaRng r3(make_seed(5), 1);
  const SecretKey a = sample_secret(r1, params);
  const SecretKey b = sample_secret(r2, params);
  const SecretKey c = sample_secret(r3, params);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_NE(a.entries, c.entries);
}

TEST(SampleSecret, MeanMatchesUniform) {
  LweParams params = small_params();
  params.n = 100000;
  ChaChaRng rng(make_seed(77), 0);
  const SecretKey key = sample_secret(rng, params);
  double sum = 0.0;
  for (const Residue e : key.entries) sum += static_cast<double>(e);
  const double mean = sum / static_cast<double>(params.n);
  const double expected = (static_cast<double>(params.q) - 1.0) / 2.0;
  // std of uniform over [0, q) is q/sqrt(12)
  const double se = static_cast<double>(params.q) / std::sqrt(12.0 * params.n);
  EXPECT_NEAR(mean, expected, 3.0 * se);
}

TEST(DecodeCentered, Examples) {
  EXPECT_EQ(decode_centered(0, 65536), 0);
  EXPECT_EQ(decode_centered(65535, 65536), -1);
  EXPECT_EQ(decode_centered(32768, 65536), 32768);  // boundary maps to +q/2
  EXPECT_THROW(decode_centered(65536, 65536), std::invalid_argument);
}

TEST(Encrypt, ZeroLevelsGiveMask) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(1), params);
  ChaChaRng rng(make_seed(2), 0);
  const SecretKey key = sample_secret(rng, params);
  const LevelVector zeros(params.m, 0);
  const Ciphertext ct = encrypt(params, matrix, key, zeros);
  EXPECT_EQ(ct.entries, mask_from_key(matrix, key, params.q));
}

TEST(Encrypt, ZeroKeyGivesScaledLevels) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(1), params);
  SecretKey zero_key;
  zero_key.entries.assign(params.n, 0);
  ChaChaRng rng(make_seed(3), 0);
  const LevelVector k = random_levels(rng, params.m, params.max_level());
  const Ciphertext ct = encrypt(params, matrix, zero_key, k);
  for (std::size_t j = 0; j < params.m; ++j) {
    const Level expected =
        ((k[j] % (Level{1} << params.b)) + (Level{1} << params.b)) % (Level{1} << params.b);
    EXPECT_EQ(ct.entries[j],
              (static_cast<Residue>(expected) * params.step()) % params.q);
  }
}

TEST(Encrypt, RejectsOutOfRangeLevel) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(1), params);
  ChaChaRng rng(make_seed(2), 0);
  const SecretKey key = sample_secret(rng, params);
  LevelVector k(params.m, 0);
  k[3] = params.max_level() + 1;
  EXPECT_THROW(encrypt(params, matrix, key, k), std::invalid_argument);
}

TEST(Encrypt, RejectsDimensionMismatch) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(1), params);
  ChaChaRng rng(make_seed(2), 0);
  const SecretKey key = sample_secret(rng, params);
  const LevelVector k(params.m - 1, 0);
  EXPECT_THROW(encrypt(params, matrix, key, k), std::invalid_argument);
}

TEST(Roundtrip, ExactOverRandomInstances) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(11), params);
  ChaChaRng rng(make_seed(12), 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const SecretKey key = sample_secret(rng, params);
    const LevelVector k = random_levels(rng, params.m, params.max_level());
    const Ciphertext ct = encrypt(params, matrix, key, k);
    EXPECT_EQ(decrypt(params, matrix, key, ct), k);
  }
}

TEST(AddCiphertexts, IdentityAndLaws) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(21), params);
  ChaChaRng rng(make_seed(22), 0);
  const SecretKey key = sample_secret(rng, params);
  const LevelVector k = random_levels(rng, params.m, params.max_level());
  const Ciphertext a = encrypt(params, matrix, key, k);

  Ciphertext zero;
  zero.entries.assign(params.m, 0);
  EXPECT_EQ(add_ciphertexts(a, zero, params.q).entries, a.entries);

  SecretKey key2 = sample_secret(rng, params);
  SecretKey key3 = sample_secret(rng, params);
  const Ciphertext b = encrypt(params, matrix, key2, random_levels(rng, params.m, 4));
  const Ciphertext c = encrypt(params, matrix, key3, random_levels(rng, params.m, 4));
  EXPECT_EQ(add_ciphertexts(a, b, params.q).entries, add_ciphertexts(b, a, params.q).entries);
  EXPECT_EQ(add_ciphertexts(add_ciphertexts(a, b, params.q), c, params.q).entries,
            add_ciphertexts(a, add_ciphertexts(b, c, params.q), params.q).entries);

  Ciphertext wrong;
  wrong.entries.assign(params.m + 1, 0);
  EXPECT_THROW(add_ciphertexts(a, wrong, params.q), std::invalid_argument);
}

// Additive homomorphism against the brute-force plaintext sum, N up to 32,
// with the per-client levels kept small enough that the sum cannot wrap.
TEST(Homomorphism, SumOfEncryptionsDecryptsToSumOfLevels) {
  LweParams params = small_params();
  params.b = 8;  // 2^{b-1} = 128 levels of headroom across 32 clients
  const PublicMatrix matrix = expand_public_matrix(make_seed(31), params);
  ChaChaRng rng(make_seed(32), 0);
  for (const std::size_t n_clients : {2u, 3u, 8u, 17u, 32u}) {
    const Level per_client =
        std::max<Level>(1, params.max_level() / static_cast<Level>(n_clients));
    Ciphertext total;
    total.entries.assign(params.m, 0);
    SecretKey key_sum;
    key_sum.entries.assign(params.n, 0);
    LevelVector level_sum(params.m, 0);
    for (std::size_t i = 0; i < n_clients; ++i) {
      const SecretKey key = sample_secret(rng, params);
      const LevelVector k = random_levels(rng, params.m, per_client);
      total = add_ciphertexts(total, encrypt(params, matrix, key, k), params.q);
      for (std::size_t j = 0; j < params.n; ++j) {
        key_sum.entries[j] = (key_sum.entries[j] + key.entries[j]) % params.q;
      }
      for (std::size_t j = 0; j < params.m; ++j) level_sum[j] += k[j];
    }
    EXPECT_EQ(decrypt(params, matrix, key_sum, total), level_sum) << "N=" << n_clients;
  }
}

TEST(Decrypt, EightClientSumExact) {
  LweParams params = small_params();
  params.b = 5;  // sums of eight +-1 levels stay strictly inside the range
  const PublicMatrix matrix = expand_public_matrix(make_seed(41), params);
  ChaChaRng rng(make_seed(42), 0);
  Ciphertext total;
  total.entries.assign(params.m, 0);
  SecretKey key_sum;
  key_sum.entries.assign(params.n, 0);
  LevelVector level_sum(params.m, 0);
  for (int i = 0; i < 8; ++i) {
    const SecretKey key = sample_secret(rng, params);
    const LevelVector k = random_levels(rng, params.m, 1);
    total = add_ciphertexts(total, encrypt(params, matrix, key, k), params.q);
    for (std::size_t j = 0; j < params.n; ++j) {
      key_sum.entries[j] = (key_sum.entries[j] + key.entries[j]) % params.q;
    }
    for (std::size_t j = 0; j < params.m; ++j) level_sum[j] += k[j];
  }
  EXPECT_EQ(decrypt(params, matrix, key_sum, total), level_sum);
}

// A sum just past q/2 wraps and decodes 2^b levels away from the truth.
TEST(Decrypt, WraparoundConstructedCase) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(51), params);
  SecretKey zero_key;
  zero_key.entries.assign(params.n, 0);

  const Level top = params.max_level();   // 2^{b-1}
  LevelVector k1(params.m, 0), k2(params.m, 0);
  k1[0] = top;
  k2[0] = 1;  // sum = 2^{b-1} + 1, residue just past q/2
  const Ciphertext ct = add_ciphertexts(encrypt(params, matrix, zero_key, k1),
                                        encrypt(params, matrix, zero_key, k2), params.q);
  const LevelVector decoded = decrypt(params, matrix, zero_key, ct);
  const Level true_sum = top + 1;
  EXPECT_NE(decoded[0], true_sum);
  EXPECT_EQ(true_sum - decoded[0], Level{1} << params.b);
}

TEST(Decrypt, RejectsResidueOffTheLattice) {
  const LweParams params = small_params();
  const PublicMatrix matrix = expand_public_matrix(make_seed(61), params);
  ChaChaRng rng(make_seed(62), 0);
  const SecretKey key = sample_secret(rng, params);
  Ciphertext ct = encrypt(params, matrix, key, LevelVector(params.m, 0));
  ct.entries[7] = (ct.entries[7] + 1) % params.q;  // corrupt one residue
  EXPECT_THROW(decrypt(params, matrix, key, ct), std::runtime_error);
}

// Reusing one matrix with fresh secrets decrypts identically to using a
// fresh matrix per round.
TEST(MatrixReuse, SameDecryptedPlaintexts) {
  const LweParams params = small_params();
  const PublicMatrix fixed = expand_public_matrix(make_seed(71), params);
  ChaChaRng rng(make_seed(72), 0);
  for (int round = 0; round < 4; ++round) {
    const PublicMatrix fresh = expand_public_matrix(make_seed(100 + round), params);
    const LevelVector k = random_levels(rng, params.m, params.max_level());
    const SecretKey s1 = sample_secret(rng, params);
    const SecretKey s2 = sample_secret(rng, params);
    EXPECT_EQ(decrypt(params, fixed, s1, encrypt(params, fixed, s1, k)),
              decrypt(params, fresh, s2, encrypt(params, fresh, s2, k)));
  }
}

TEST(ValidateParams, PaperSettingWarnsOnCpaBounds) {
  LweParams params;  // n=256, m=768, q=65536, b=6
  const auto warnings = validate_params(params);
  // q = 65536 sits far below 2^{b+2} m^{3/2} / sqrt(3) ~ 3.14e6
  bool found_q_floor = false;
  for (const auto& w : warnings) {
    if (w.find("2^{b+2}") != std::string::npos) found_q_floor = true;
  }
  EXPECT_TRUE(found_q_floor);
}

TEST(ValidateParams, ThreeNIsSatisfiedAtPaperRatio) {
  LweParams params;
  params.n = 128;
  params.m = 384;  // exactly 3n
  params.q = Residue{1} << 22;
  params.b = 6;
  for (const auto& w : validate_params(params)) {
    EXPECT_EQ(w.find("m < 3n"), std::string::npos) << w;
  }
}

TEST(ValidateParams, DivisibilityIsAHardError) {
  LweParams params;
  params.q = 65537;
  params.b = 6;
  EXPECT_THROW(validate_params(params), std::invalid_argument);
}

}  // namespace
}  // namespace flag
