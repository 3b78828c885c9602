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

#ifndef FLAG_FL_PROTOCOL_HPP_
#define FLAG_FL_PROTOCOL_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flag/chacha_rng.hpp"
#include "flag/lwe.hpp"
#include "flag/quantizer.hpp"
#include "flag/trainer.hpp"
#include "flag/wire.hpp"

namespace flag {

enum class AggregationMode { kFlag, kVanilla, kQuantizedPlain, kLweBaseline };

inline AggregationMode aggregation_mode_from_string(const std::string& name) {
  if (name == "flag") return AggregationMode::kFlag;
  if (name == "vanilla") return AggregationMode::kVanilla;
  if (name == "quantized_plain") return AggregationMode::kQuantizedPlain;
  if (name == "lwe_baseline") return AggregationMode::kLweBaseline;
  throw std::invalid_argument("unknown aggregation mode: " + name);
}

// Model coordinates are split into buckets of m consecutive values; the
// last bucket is zero-padded. Each bucket is one ciphertext.
struct Bucketing {
  std::size_t dim = 0;          // d
  std::size_t bucket_size = 0;  // m
  std::size_t num_buckets = 0;
  std::size_t pad = 0;

  std::size_t padded_dim() const { return num_buckets * bucket_size; }
};

inline Bucketing compute_bucketing(std::size_t dim, std::size_t bucket_size) {
  if (dim < 1 || bucket_size < 1) throw std::invalid_argument("dimensions must be positive");
  Bucketing layout;
  layout.dim = dim;
  layout.bucket_size = bucket_size;
  layout.num_buckets = (dim + bucket_size - 1) / bucket_size;
  layout.pad = layout.padded_dim() - dim;
  return layout;
}

inline std::vector<LevelVector> bucketize(const LevelVector& levels, std::size_t bucket_size) {
  const Bucketing layout = compute_bucketing(levels.size(), bucket_size);
  std::vector<LevelVector> buckets(layout.num_buckets, LevelVector(bucket_size, 0));
  for (std::size_t j = 0; j < levels.size(); ++j) {
    buckets[j / bucket_size][j % bucket_size] = levels[j];
  }
  return buckets;
}

inline LevelVector debucketize(const std::vector<LevelVector>& buckets, std::size_t dim) {
  LevelVector levels(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    levels[j] = buckets[j / buckets.front().size()][j % buckets.front().size()];
  }
  return levels;
}

// First 8 bytes of the matrix seed, used as a consistency check in round
// headers.
inline std::uint64_t seed_id(const Seed& seed) {
  std::uint64_t id = 0;
  for (int i = 0; i < 8; ++i) id |= static_cast<std::uint64_t>(seed.bytes[static_cast<std::size_t>(i)]) << (8 * i);
  return id;
}

// Wire header of a client upload, 32 bytes:
//   round u32 | client_id u32 | num_buckets u32 | b u32 | C_t bits u64 |
//   seed id u64
// all little-endian, followed by the payload: num_buckets * m residues
// packed contiguously at ceil(log2 q) bits (one zero-padded final byte).
struct UploadMessage {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint32_t num_buckets = 0;
  std::uint32_t bits = 0;
  double clip = 0.0;
  std::uint64_t matrix_seed_id = 0;
  std::vector<Residue> payload;  // concatenated bucket entries

  static constexpr std::size_t kHeaderBytes = 32;
};

// Broadcast mirrors the upload layout without the client id (28-byte
// header).
struct BroadcastMessage {
  std::uint32_t round = 0;
  std::uint32_t num_buckets = 0;
  std::uint32_t bits = 0;
  double clip = 0.0;
  std::uint64_t matrix_seed_id = 0;
  std::vector<Residue> payload;

  static constexpr std::size_t kHeaderBytes = 28;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t double_bits(double v) {
  std::uint64_t bits;
  static_assert(sizeof bits == sizeof v);
  std::memcpy(&bits, &v, sizeof bits);
  return bits;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_upload(const UploadMessage& msg, Residue q) {
  std::vector<std::uint8_t> out;
  out.reserve(UploadMessage::kHeaderBytes + wire::packed_bytes(msg.payload.size(), q));
  detail::put_u32(out, msg.round);
  detail::put_u32(out, msg.client_id);
  detail::put_u32(out, msg.num_buckets);
  detail::put_u32(out, msg.bits);
  detail::put_u64(out, detail::double_bits(msg.clip));
  detail::put_u64(out, msg.matrix_seed_id);
  auto payload = wire::pack_residues(msg.payload, q);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline std::vector<std::uint8_t> serialize_broadcast(const BroadcastMessage& msg, Residue q) {
  std::vector<std::uint8_t> out;
  out.reserve(BroadcastMessage::kHeaderBytes + wire::packed_bytes(msg.payload.size(), q));
  detail::put_u32(out, msg.round);
  detail::put_u32(out, msg.num_buckets);
  detail::put_u32(out, msg.bits);
  detail::put_u64(out, detail::double_bits(msg.clip));
  detail::put_u64(out, msg.matrix_seed_id);
  auto payload = wire::pack_residues(msg.payload, q);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// Per-round accounting: the byte columns follow the packing formulas
// exactly, the loss columns the training trajectory.
struct RoundMetrics {
  std::uint32_t round = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  std::size_t upload_bytes = 0;  // per client
  std::size_t broadcast_bytes = 0;
  std::size_t overflow_count = 0;
  double clip = 0.0;
  double wall_seconds = 0.0;
};

struct TransportTally {
  std::uint64_t upload_bytes = 0;
  std::uint64_t broadcast_bytes = 0;
  std::uint64_t key_agreement_bytes = 0;
};

// Everything a client keeps between rounds. The model, velocity, clip
// threshold, and all streams are client-local; the partition is shared
// read-only data owned by the run.
struct ClientState {
  std::uint32_t id = 0;
  Model model;
  std::vector<double> velocity;
  const DatasetPartition* partition = nullptr;
  SecretKey secret;
  DitherSource dither;
  ChaChaRng batch_rng;
  ChaChaRng key_rng;
  ChaChaRng noise_rng;  // baseline error sampling
  double clip = 1.0;    // C_t
};

// The server only ever holds ciphertexts and round bookkeeping; there is
// no field that could carry a secret key or plaintext gradient.
struct ServerState {
  std::uint32_t round = 0;
  std::uint64_t matrix_seed_id = 0;
  std::vector<UploadMessage> received;
  std::optional<BroadcastMessage> aggregated;
};

// Adds the rounded Gaussian error of the Enc^LWE baseline to a ciphertext
// in place. The raw signed noise values can be captured for the
// simulation's overflow oracle.
inline void apply_baseline_noise(Ciphertext& ct, double sigma_e, ChaChaRng& rng, Residue q,
                                 std::vector<Level>* injected = nullptr) {
  if (sigma_e < 0.0) throw std::invalid_argument("sigma_e must be nonnegative");
  for (auto& entry : ct.entries) {
    const Level noise =
        sigma_e > 0.0 ? static_cast<Level>(std::llround(sigma_e * rng.gaussian())) : 0;
    if (injected) injected->push_back(noise);
    const Level reduced =
        ((noise % static_cast<Level>(q)) + static_cast<Level>(q)) % static_cast<Level>(q);
    entry = (entry + static_cast<Residue>(reduced)) % q;
  }
}

// Enc^LWE baseline: FLAG ciphertext plus a rounded Gaussian error term
// per coordinate, the scheme whose error growth FLAG eliminates.
inline Ciphertext baseline_lwe_encrypt(const LweParams& params, const PublicMatrix& matrix,
                                       const SecretKey& key, const LevelVector& levels,
                                       double sigma_e, ChaChaRng& rng,
                                       std::vector<Level>* injected = nullptr) {
  Ciphertext ct = encrypt(params, matrix, key, levels);
  apply_baseline_noise(ct, sigma_e, rng, params.q, injected);
  return ct;
}

// Builds the round upload from already-quantized levels: bucket, encrypt
// each bucket against the cached A*s mask, concatenate payloads.
inline UploadMessage client_upload(std::uint32_t round, std::uint32_t client_id,
                                   const LevelVector& levels, const std::vector<Residue>& mask,
                                   const LweParams& params, double clip,
                                   std::uint64_t matrix_seed_id) {
  const Bucketing layout = compute_bucketing(levels.size(), params.m);
  UploadMessage msg;
  msg.round = round;
  msg.client_id = client_id;
  msg.num_buckets = static_cast<std::uint32_t>(layout.num_buckets);
  msg.bits = static_cast<std::uint32_t>(params.b);
  msg.clip = clip;
  msg.matrix_seed_id = matrix_seed_id;
  msg.payload.reserve(layout.padded_dim());
  for (const auto& bucket : bucketize(levels, params.m)) {
    Ciphertext ct = encrypt_with_mask(mask, bucket, params);
    msg.payload.insert(msg.payload.end(), ct.entries.begin(), ct.entries.end());
  }
  return msg;
}

// Componentwise modular sum of all received payloads. All headers must
// agree; messages are folded in client-id order so the broadcast bytes are
// deterministic.
inline BroadcastMessage server_aggregate(ServerState& server,
                                         const std::vector<UploadMessage>& messages,
                                         Residue q) {
  if (messages.empty()) throw std::invalid_argument("no upload messages to aggregate");
  const auto& first = messages.front();
  BroadcastMessage out;
  out.round = first.round;
  out.num_buckets = first.num_buckets;
  out.bits = first.bits;
  out.clip = first.clip;
  out.matrix_seed_id = first.matrix_seed_id;
  out.payload.assign(first.payload.size(), 0);
  for (const auto& msg : messages) {
    if (msg.round != first.round || msg.num_buckets != first.num_buckets ||
        msg.bits != first.bits || msg.matrix_seed_id != first.matrix_seed_id ||
        detail::double_bits(msg.clip) != detail::double_bits(first.clip)) {
      throw std::runtime_error("upload header mismatch from client " +
                               std::to_string(msg.client_id));
    }
    if (msg.payload.size() != out.payload.size()) {
      throw std::runtime_error("upload payload size mismatch from client " +
                               std::to_string(msg.client_id));
    }
    for (std::size_t j = 0; j < out.payload.size(); ++j) {
      out.payload[j] = (out.payload[j] + msg.payload[j]) % q;
    }
  }
  server.round = first.round;
  server.received = messages;
  server.aggregated = out;
  return out;
}

// Decrypts the aggregated payload with the round's key-sum mask and
// returns the centered level sums, one per padded coordinate.
inline LevelVector decode_broadcast(const BroadcastMessage& msg,
                                    const std::vector<Residue>& key_sum_mask,
                                    const LweParams& params) {
  LevelVector levels;
  levels.reserve(msg.payload.size());
  const std::size_t buckets = msg.payload.size() / params.m;
  for (std::size_t bucket = 0; bucket < buckets; ++bucket) {
    Ciphertext ct;
    ct.entries.assign(msg.payload.begin() + static_cast<std::ptrdiff_t>(bucket * params.m),
                      msg.payload.begin() + static_cast<std::ptrdiff_t>((bucket + 1) * params.m));
    LevelVector part = decrypt_with_mask(key_sum_mask, ct, params);
    levels.insert(levels.end(), part.begin(), part.end());
  }
  return levels;
}

// Baseline decoding has to round: the Gaussian error makes residues land
// off the plaintext lattice.
inline LevelVector decode_broadcast_rounded(const BroadcastMessage& msg,
                                            const std::vector<Residue>& key_sum_mask,
                                            const LweParams& params) {
  const Residue step = params.step();
  const Level two_b = Level{1} << static_cast<unsigned>(params.b);
  LevelVector levels;
  levels.reserve(msg.payload.size());
  const std::size_t buckets = msg.payload.size() / params.m;
  for (std::size_t bucket = 0; bucket < buckets; ++bucket) {
    for (std::size_t j = 0; j < params.m; ++j) {
      const Residue ct = msg.payload[bucket * params.m + j];
      const Residue r = (ct + params.q - key_sum_mask[j]) % params.q;
      const Level nearest = static_cast<Level>((r + step / 2) / step) % two_b;
      levels.push_back(nearest > two_b / 2 ? nearest - two_b : nearest);
    }
  }
  return levels;
}

// theta <- theta - (eta / N) * g_total, shared by every mode so that equal
// decoded aggregates give bit-identical models on all clients.
inline void apply_update(std::vector<double>& params, std::span<const double> g_total,
                         double eta, std::size_t num_clients) {
  if (params.size() > g_total.size()) throw std::invalid_argument("aggregate shorter than model");
  const double scale = eta / static_cast<double>(num_clients);
  for (std::size_t j = 0; j < params.size(); ++j) {
    params[j] -= scale * g_total[j];
  }
}

// Decrypts the broadcast with this round's key sum, rescales to gradient
// units and applies the model update. Returns the dequantized aggregate
// so the caller can derive the next clip threshold from it.
inline std::vector<double> client_apply_update(ClientState& client,
                                               const BroadcastMessage& broadcast,
                                               const std::vector<Residue>& key_sum_mask,
                                               const LweParams& params, double eta,
                                               std::size_t num_clients) {
  const LevelVector levels = decode_broadcast(broadcast, key_sum_mask, params);
  const QuantConfig quant{broadcast.clip, static_cast<int>(broadcast.bits)};
  const std::vector<double> g_total = dequantize(levels, quant);
  apply_update(client.model.params, g_total, eta, num_clients);
  return g_total;
}

// Counts coordinates where the decoded centered sum differs from the true
// sum, i.e. where the aggregated plaintext wrapped past q/2. Simulation
// instrument only: the true sums come from oracle access to the clients'
// levels.
inline std::size_t measure_overflow(const LevelVector& decoded,
                                    std::span<const Level> true_sums) {
  if (decoded.size() < true_sums.size()) throw std::invalid_argument("decoded vector too short");
  std::size_t count = 0;
  for (std::size_t j = 0; j < true_sums.size(); ++j) {
    if (decoded[j] != true_sums[j]) ++count;
  }
  return count;
}

// Wrap counter on the residue scale: a pre-reduction total outside
// (-q/2, q/2] decodes to a different value than the true one. Used for the
// Enc^LWE baseline, whose noisy totals are not level-aligned.
inline std::size_t count_wraps(std::span<const std::int64_t> true_totals, Residue q) {
  const std::int64_t half = static_cast<std::int64_t>(q / 2);
  std::size_t count = 0;
  for (std::int64_t total : true_totals) {
    if (total > half || total <= -half) ++count;
  }
  return count;
}

}  // namespace flag

#endif  // FLAG_FL_PROTOCOL_HPP_
