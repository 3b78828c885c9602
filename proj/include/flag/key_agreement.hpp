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

#ifndef FLAG_KEY_AGREEMENT_HPP_
#define FLAG_KEY_AGREEMENT_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "flag/chacha_rng.hpp"
#include "flag/lwe.hpp"
#include "flag/wire.hpp"

namespace flag {

// N-of-N additive sharing: the clients only ever need the modular sum of
// their keys, so each key is split into N uniform-looking shares that sum
// back to it. Any N-1 shares of a key are jointly uniform; no threshold
// reconstruction or dropout tolerance is provided.

struct KeyShare {
  std::uint32_t from_client = 0;
  std::uint32_t to_client = 0;
  std::vector<Residue> share;
};

struct KeySumTranscript {
  std::uint32_t round = 0;
  std::vector<std::vector<Residue>> partial_sums;  // one per client
  std::vector<Residue> key_sum;                    // s_sum = sum_i s^{(i)} mod q
};

inline std::vector<KeyShare> split_additive(const SecretKey& secret, Residue q,
                                            std::size_t num_clients, ChaChaRng& rng,
                                            std::uint32_t from_client = 0) {
  if (num_clients < 2) throw std::invalid_argument("additive sharing needs at least 2 clients");
  const std::size_t n = secret.entries.size();
  std::vector<KeyShare> shares(num_clients);
  std::vector<Residue> running(n, 0);
  for (std::size_t i = 0; i + 1 < num_clients; ++i) {
    shares[i].from_client = from_client;
    shares[i].to_client = static_cast<std::uint32_t>(i);
    shares[i].share.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      Residue r = rng.uniform_below(q);
      shares[i].share[j] = r;
      running[j] = (running[j] + r) % q;
    }
  }
  auto& last = shares[num_clients - 1];
  last.from_client = from_client;
  last.to_client = static_cast<std::uint32_t>(num_clients - 1);
  last.share.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    last.share[j] = (secret.entries[j] + q - running[j]) % q;
  }
  return shares;
}

// Serialized share message: header {round, from, to} as LE u32 plus the n
// residues packed at ceil(log2 q) bits, same packing as ciphertexts.
inline std::size_t share_message_bytes(std::size_t n, Residue q) {
  return 12 + wire::packed_bytes(n, q);
}

// Runs one key-sum round: every client splits its fresh secret, share j
// goes to client j, each client folds received shares into a partial sum,
// and the partial sums combine into s_sum. The transcript holds only
// shares and partial sums; raw keys never leave their owner.
//
// on_message, when set, is called once per simulated share delivery with
// its wire size, so key-agreement traffic can be accounted separately
// from gradient traffic.
inline KeySumTranscript run_key_sum(
    const std::vector<SecretKey>& secrets, Residue q, std::vector<ChaChaRng>& rngs,
    std::uint32_t round = 0,
    const std::function<void(std::uint32_t from, std::uint32_t to, std::size_t bytes)>&
        on_message = nullptr) {
  const std::size_t num_clients = secrets.size();
  if (num_clients < 2) throw std::invalid_argument("key agreement needs at least 2 clients");
  if (rngs.size() != num_clients) throw std::invalid_argument("one rng stream per client required");
  const std::size_t n = secrets.front().entries.size();

  KeySumTranscript transcript;
  transcript.round = round;
  transcript.partial_sums.assign(num_clients, std::vector<Residue>(n, 0));

  for (std::size_t i = 0; i < num_clients; ++i) {
    if (secrets[i].entries.size() != n) throw std::invalid_argument("secret length mismatch");
    auto shares = split_additive(secrets[i], q, num_clients, rngs[i],
                                 static_cast<std::uint32_t>(i));
    for (const auto& share : shares) {
      if (on_message) on_message(share.from_client, share.to_client, share_message_bytes(n, q));
      auto& partial = transcript.partial_sums[share.to_client];
      for (std::size_t j = 0; j < n; ++j) {
        partial[j] = (partial[j] + share.share[j]) % q;
      }
    }
  }

  transcript.key_sum.assign(n, 0);
  for (const auto& partial : transcript.partial_sums) {
    for (std::size_t j = 0; j < n; ++j) {
      transcript.key_sum[j] = (transcript.key_sum[j] + partial[j]) % q;
    }
  }
  return transcript;
}

}  // namespace flag

#endif  // FLAG_KEY_AGREEMENT_HPP_
