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

// Minimal tour of the encryption layer: clip and quantize a gradient,
// encrypt it against a seeded public matrix, and decrypt it back exactly.

#include <cstdio>

#include "flag/lwe.hpp"
#include "flag/quantizer.hpp"

int main() {
  flag::LweParams params;
  params.n = 32;
  params.m = 8;
  params.q = 65536;
  params.b = 6;

  const flag::Seed seed = flag::make_seed(42);
  const flag::PublicMatrix matrix = flag::expand_public_matrix(seed, params);

  flag::ChaChaRng key_rng(flag::make_seed(7), 0);
  const flag::SecretKey secret = flag::sample_secret(key_rng, params);

  const std::vector<double> gradient{0.8, -0.35, 0.12, -0.93, 0.5, 0.0, 0.27, -0.61};
  const double clip_threshold = 1.0;
  flag::QuantConfig quant{clip_threshold, params.b};
  flag::DitherSource dither{flag::ChaChaRng(flag::make_seed(9), 0)};

  const auto clipped = flag::clip(gradient, clip_threshold);
  const flag::LevelVector levels = flag::quantize(clipped, quant, dither);
  const flag::Ciphertext ct = flag::encrypt(params, matrix, secret, levels);
  const flag::LevelVector decoded = flag::decrypt(params, matrix, secret, ct);
  const auto values = flag::dequantize(decoded, quant);

  std::printf("%10s %8s %10s %12s\n", "input", "level", "cipher", "dequantized");
  for (std::size_t j = 0; j < gradient.size(); ++j) {
    std::printf("%10.4f %8lld %10llu %12.4f\n", gradient[j],
                static_cast<long long>(levels[j]),
                static_cast<unsigned long long>(ct.entries[j]), values[j]);
  }
  std::printf("roundtrip exact: %s\n", decoded == levels ? "yes" : "no");
  return decoded == levels ? 0 : 1;
}
