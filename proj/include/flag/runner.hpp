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

#ifndef FLAG_RUNNER_HPP_
#define FLAG_RUNNER_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flag/analysis.hpp"
#include "flag/config.hpp"
#include "flag/fl_protocol.hpp"
#include "flag/key_agreement.hpp"
#include "flag/lwe.hpp"
#include "flag/quantizer.hpp"
#include "flag/trainer.hpp"

namespace flag {

struct RunResult {
  std::vector<RoundMetrics> rounds;
  TransportTally transport;
  Model final_model;
  double final_loss = 0.0;
  double final_accuracy = -1.0;  // negative when the task has no accuracy
  std::size_t total_overflows = 0;
  double tau_measured = 1.0;
};

// Drives Algorithm 1 for T rounds over an in-process transport. The round
// phases are barriers: every upload lands before aggregation, aggregation
// completes before any client updates. Clients are processed in id order
// everywhere, so the whole run is a pure function of the config seeds.
class FederatedRun {
 public:
  explicit FederatedRun(RunConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    build_dataset();
    build_clients();
    if (uses_crypto()) {
      matrix_seed_ = make_seed(cfg_.seeds.matrix);
      matrix_ = expand_public_matrix(matrix_seed_, cfg_.crypto);
      server_.matrix_seed_id = seed_id(matrix_seed_);
    }
  }

  bool uses_crypto() const {
    return cfg_.mode == AggregationMode::kFlag || cfg_.mode == AggregationMode::kLweBaseline;
  }

  const RunConfig& config() const { return cfg_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const ServerState& server() const { return server_; }
  const std::vector<DatasetPartition>& partitions() const { return partitions_; }
  const PublicMatrix& matrix() const { return matrix_; }

  // One communication round: steps 3-12 of the protocol loop plus the
  // overflow instrumentation. Returns the metrics row for round t.
  RoundMetrics step() {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n_clients = clients_.size();
    const std::size_t d = clients_.front().model.params.size();
    const Bucketing layout = compute_bucketing(d, cfg_.crypto.m);

    RoundMetrics metrics;
    metrics.round = round_;
    metrics.clip = clients_.front().clip;
    metrics.loss = global_loss(clients_.front().model, partitions_);
    {
      const auto grad = global_gradient(clients_.front().model, partitions_);
      double sq = 0.0;
      for (double v : grad) sq += v * v;
      metrics.grad_norm_sq = sq;
    }

    // local gradient step, momentum applied client-side
    SgdConfig sgd{cfg_.eta, cfg_.momentum, cfg_.weight_decay, cfg_.batch_size};
    std::vector<std::vector<double>> directions(n_clients);
    for (std::size_t i = 0; i < n_clients; ++i) {
      auto& client = clients_[i];
      const std::size_t part_size = client.partition->size();
      std::vector<std::size_t> batch(cfg_.batch_size);
      for (auto& idx : batch) {
        idx = static_cast<std::size_t>(client.batch_rng.uniform_below(part_size));
      }
      auto grad = local_gradient(client.model, *client.partition, batch, sgd);
      directions[i] = momentum_step(client.velocity, grad, sgd);
    }

    std::vector<double> g_total;
    switch (cfg_.mode) {
      case AggregationMode::kVanilla:
        g_total = vanilla_round(directions, d, metrics);
        break;
      case AggregationMode::kQuantizedPlain:
        g_total = quantized_plain_round(directions, layout, metrics);
        break;
      case AggregationMode::kFlag:
      case AggregationMode::kLweBaseline:
        g_total = encrypted_round(directions, layout, metrics);
        break;
    }

    // identical update on every client; everyone must land on the same model
    for (auto& client : clients_) {
      apply_update(client.model.params, g_total, cfg_.eta, n_clients);
    }
    for (std::size_t i = 1; i < n_clients; ++i) {
      if (clients_[i].model.params != clients_.front().model.params) {
        throw std::runtime_error("client models diverged after round " + std::to_string(round_));
      }
    }

    if (cfg_.clip_mode == ClipMode::kAdaptive) {
      // next round clips at the l-inf norm of this round's decoded
      // aggregate, so the aggregated sum keeps fitting the representable
      // range (-C, C]. Every client derives the same value from the
      // broadcast. A zero aggregate keeps the previous threshold.
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm = std::max(norm, std::fabs(g_total[j]));
      if (norm > 0.0) {
        for (auto& client : clients_) client.clip = norm;
      }
    }

    ++round_;
    server_.round = round_;
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return metrics;
  }

  RunResult run() {
    RunResult result;
    result.rounds.reserve(cfg_.rounds);
    for (std::size_t t = 0; t < cfg_.rounds; ++t) {
      RoundMetrics row = step();
      result.total_overflows += row.overflow_count;
      result.rounds.push_back(row);
    }
    result.transport = transport_;
    result.final_model = clients_.front().model;
    result.final_loss = global_loss(result.final_model, partitions_);
    if (cfg_.model.kind == ModelKind::kLogisticRegression ||
        cfg_.model.kind == ModelKind::kMlp) {
      result.final_accuracy = classification_accuracy(result.final_model, partitions_);
    }
    switch (cfg_.mode) {
      case AggregationMode::kFlag:
      case AggregationMode::kLweBaseline:
        result.tau_measured = analysis::comm_factor_measured(cfg_.crypto.q, cfg_.crypto.b);
        break;
      default:
        result.tau_measured = 1.0;
        break;
    }
    return result;
  }

 private:
  void build_dataset() {
    if (cfg_.dataset.type == "csv") {
      DatasetPartition all = load_csv(cfg_.dataset.csv_path, {cfg_.dataset.csv_label_column});
      if (all.size() < cfg_.clients) {
        throw ConfigError("dataset: fewer rows than clients");
      }
      if (!all.features.empty() && all.features.front().size() != cfg_.model.features) {
        throw ConfigError("model.features: does not match csv column count");
      }
      partitions_.resize(cfg_.clients);
      const std::size_t chunk = all.size() / cfg_.clients;
      for (std::size_t i = 0; i < cfg_.clients; ++i) {
        auto& part = partitions_[i];
        part.owner = static_cast<std::uint32_t>(i);
        const std::size_t begin = i * chunk;
        const std::size_t end = (i + 1 == cfg_.clients) ? all.size() : begin + chunk;
        for (std::size_t s = begin; s < end; ++s) {
          part.features.push_back(all.features[s]);
          part.labels.push_back(all.labels[s]);
        }
      }
    } else {
      partitions_ = make_synthetic(cfg_.dataset.synthetic, cfg_.dataset.seed);
    }
  }

  void build_clients() {
    constexpr std::uint32_t kInitDomain = 0x494e4954u;   // "INIT"
    constexpr std::uint32_t kBatchDomain = 0x42415443u;  // "BATC"
    constexpr std::uint32_t kDitherDomain = 0x44495448u; // "DITH"
    constexpr std::uint32_t kKeyDomain = 0x4b455953u;    // "KEYS"
    constexpr std::uint32_t kNoiseDomain = 0x4e4f4953u;  // "NOIS"

    ChaChaRng init_rng(make_seed(cfg_.seeds.client_rng), 0, kInitDomain);
    Model initial = init_model(cfg_.model, init_rng);

    double clip0 = cfg_.clip_initial;
    if (cfg_.clip_mode == ClipMode::kTargetDelta) {
      clip0 = analysis::min_clip_threshold(cfg_.clients, cfg_.sigma_g, cfg_.delta_overflow);
    }

    clients_.resize(cfg_.clients);
    for (std::size_t i = 0; i < cfg_.clients; ++i) {
      auto& client = clients_[i];
      client.id = static_cast<std::uint32_t>(i);
      client.model = initial;
      client.partition = &partitions_[i];
      client.batch_rng = ChaChaRng(make_seed(cfg_.seeds.client_rng), i, kBatchDomain);
      client.dither = DitherSource(ChaChaRng(make_seed(cfg_.seeds.client_dither), i, kDitherDomain));
      client.key_rng = ChaChaRng(make_seed(cfg_.seeds.client_rng), i, kKeyDomain);
      client.noise_rng = ChaChaRng(make_seed(cfg_.seeds.client_rng), i, kNoiseDomain);
      client.clip = clip0;
    }
  }

  std::vector<double> vanilla_round(const std::vector<std::vector<double>>& directions,
                                    std::size_t d, RoundMetrics& metrics) {
    std::vector<double> total(d, 0.0);
    for (const auto& dir : directions) {
      for (std::size_t j = 0; j < d; ++j) total[j] += dir[j];
    }
    // accounted at 32 bits per coordinate, the full-precision reference
    metrics.upload_bytes = UploadMessage::kHeaderBytes + 4 * d;
    metrics.broadcast_bytes = BroadcastMessage::kHeaderBytes + 4 * d;
    transport_.upload_bytes += metrics.upload_bytes * directions.size();
    transport_.broadcast_bytes += metrics.broadcast_bytes;
    return total;
  }

  // Plaintext twin of the encrypted pipeline: the same clip/quantize path
  // and the same mod-2^b aggregate arithmetic, minus the masking. FLAG
  // rounds must match its model trajectory bit for bit.
  std::vector<double> quantized_plain_round(const std::vector<std::vector<double>>& directions,
                                            const Bucketing& layout, RoundMetrics& metrics) {
    const double clip_t = clients_.front().clip;
    const QuantConfig quant{clip_t, cfg_.crypto.b};
    const Level two_b = Level{1} << static_cast<unsigned>(cfg_.crypto.b);
    const std::size_t padded = layout.padded_dim();

    std::vector<Level> residue_sum(padded, 0);
    std::vector<Level> oracle_sum(padded, 0);
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      const auto clipped = clip(directions[i], clip_t);
      const LevelVector levels = quantize(clipped, quant, clients_[i].dither);
      // pad coordinates carry zero levels and contribute nothing
      for (std::size_t j = 0; j < levels.size(); ++j) {
        residue_sum[j] = (residue_sum[j] + ((levels[j] % two_b) + two_b)) % two_b;
        oracle_sum[j] += levels[j];
      }
    }

    LevelVector decoded(padded);
    for (std::size_t j = 0; j < padded; ++j) {
      decoded[j] = residue_sum[j] > two_b / 2 ? residue_sum[j] - two_b : residue_sum[j];
    }
    metrics.overflow_count = measure_overflow(decoded, oracle_sum);

    metrics.upload_bytes =
        UploadMessage::kHeaderBytes + wire::packed_bytes(padded, static_cast<Residue>(two_b));
    metrics.broadcast_bytes =
        BroadcastMessage::kHeaderBytes + wire::packed_bytes(padded, static_cast<Residue>(two_b));
    transport_.upload_bytes += metrics.upload_bytes * clients_.size();
    transport_.broadcast_bytes += metrics.broadcast_bytes;

    return dequantize(decoded, quant);
  }

  std::vector<double> encrypted_round(const std::vector<std::vector<double>>& directions,
                                      const Bucketing& layout, RoundMetrics& metrics) {
    const bool baseline = cfg_.mode == AggregationMode::kLweBaseline;
    const double clip_t = clients_.front().clip;
    const QuantConfig quant{clip_t, cfg_.crypto.b};
    const Level step = static_cast<Level>(cfg_.crypto.step());
    const std::size_t padded = layout.padded_dim();
    const double sigma_e = baseline ? cfg_.resolved_sigma_e() : 0.0;

    // fresh keys and a fresh key-sum agreement every round
    std::vector<SecretKey> secrets(clients_.size());
    std::vector<ChaChaRng> share_rngs;
    share_rngs.reserve(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      secrets[i] = sample_secret(clients_[i].key_rng, cfg_.crypto);
      share_rngs.push_back(clients_[i].key_rng);
    }
    KeySumTranscript transcript = run_key_sum(
        secrets, cfg_.crypto.q, share_rngs, round_,
        [this](std::uint32_t, std::uint32_t, std::size_t bytes) {
          transport_.key_agreement_bytes += bytes;
        });
    // the share draws advanced the per-client streams; fold them back
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      clients_[i].key_rng = share_rngs[i];
      clients_[i].secret = secrets[i];
    }

    std::vector<Level> oracle_level_sum(padded, 0);
    std::vector<std::int64_t> oracle_residue_total(padded, 0);
    std::vector<UploadMessage> uploads;
    uploads.reserve(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      auto& client = clients_[i];
      const auto clipped = clip(directions[i], clip_t);
      const LevelVector levels = quantize(clipped, quant, client.dither);

      const auto mask = mask_from_key(matrix_, secrets[i], cfg_.crypto.q);
      UploadMessage msg = client_upload(round_, client.id, levels, mask, cfg_.crypto, clip_t,
                                        server_.matrix_seed_id);
      std::vector<Level> injected;
      if (baseline) {
        Ciphertext view{std::move(msg.payload)};
        apply_baseline_noise(view, sigma_e, client.noise_rng, cfg_.crypto.q, &injected);
        msg.payload = std::move(view.entries);
      }
      for (std::size_t j = 0; j < padded; ++j) {
        const Level level = j < levels.size() ? levels[j] : 0;
        oracle_level_sum[j] += level;
        oracle_residue_total[j] += level * step + (baseline ? injected[j] : 0);
      }
      metrics.upload_bytes = serialize_upload(msg, cfg_.crypto.q).size();
      transport_.upload_bytes += metrics.upload_bytes;
      uploads.push_back(std::move(msg));
    }

    BroadcastMessage broadcast = server_aggregate(server_, uploads, cfg_.crypto.q);
    metrics.broadcast_bytes = serialize_broadcast(broadcast, cfg_.crypto.q).size();
    transport_.broadcast_bytes += metrics.broadcast_bytes;

    const auto key_sum_mask =
        mask_from_key(matrix_, SecretKey{transcript.key_sum}, cfg_.crypto.q);
    LevelVector decoded;
    if (baseline) {
      decoded = decode_broadcast_rounded(broadcast, key_sum_mask, cfg_.crypto);
      metrics.overflow_count = count_wraps(oracle_residue_total, cfg_.crypto.q);
    } else {
      decoded = decode_broadcast(broadcast, key_sum_mask, cfg_.crypto);
      metrics.overflow_count = measure_overflow(decoded, oracle_level_sum);
    }
    return dequantize(decoded, quant);
  }

  RunConfig cfg_;
  std::vector<DatasetPartition> partitions_;
  std::vector<ClientState> clients_;
  ServerState server_;
  Seed matrix_seed_;
  PublicMatrix matrix_;
  TransportTally transport_;
  std::uint32_t round_ = 0;
};

// CSV with one row per round; the documented column order is
// round,loss,grad_norm_sq,upload_bytes,broadcast_bytes,overflow_count,clip_threshold.
inline void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rows) {
  out << "round,loss,grad_norm_sq,upload_bytes,broadcast_bytes,overflow_count,clip_threshold\n";
  char buf[128];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%u,%.17g,%.17g,%zu,%zu,%zu,%.17g\n", row.round, row.loss,
                  row.grad_norm_sq, row.upload_bytes, row.broadcast_bytes, row.overflow_count,
                  row.clip);
    out << buf;
  }
}

}  // namespace flag

#endif  // FLAG_RUNNER_HPP_
