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

#ifndef FLAG_QUANTIZER_HPP_
#define FLAG_QUANTIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "flag/chacha_rng.hpp"
#include "flag/lwe.hpp"

namespace flag {

// Clipping threshold C and bit width b; the quantization step is
// delta = 2C / 2^b.
struct QuantConfig {
  double clip = 1.0;  // C
  int bits = 6;       // b

  double delta() const { return 2.0 * clip / std::pow(2.0, bits); }

  void check() const {
    if (!(clip > 0.0)) throw std::invalid_argument("clip threshold must be positive");
    if (bits < 1 || bits > 31) throw std::invalid_argument("bits must be in [1, 31]");
  }
};

// Per-coordinate i.i.d. uniform dither on (-1/2, 1/2] in level units,
// drawn fresh for every coordinate of every call. The dither is added at
// the encoder and never subtracted at the decoder (half-dithered), which
// is what makes the quantizer unbiased without sharing randomness.
class DitherSource {
 public:
  DitherSource() = default;
  explicit DitherSource(ChaChaRng stream) : stream_(std::move(stream)) {}

  // Fixed-dither source for deterministic checks.
  static DitherSource constant(double value) {
    if (!(value > -0.5 && value <= 0.5)) {
      throw std::invalid_argument("dither must lie in (-1/2, 1/2]");
    }
    DitherSource src;
    src.fixed_ = value;
    src.has_fixed_ = true;
    return src;
  }

  double next() { return has_fixed_ ? fixed_ : stream_.dither(); }

 private:
  ChaChaRng stream_;
  double fixed_ = 0.0;
  bool has_fixed_ = false;
};

// g / max(1, ||g||_inf / C): scales the vector into the l-inf ball of
// radius C, leaving vectors already inside it untouched.
inline std::vector<double> clip(std::span<const double> g, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  double max_abs = 0.0;
  for (double v : g) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite gradient entry");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  const double scale = std::max(1.0, max_abs / threshold);
  std::vector<double> out(g.begin(), g.end());
  if (scale > 1.0) {
    for (double& v : out) v /= scale;
  }
  return out;
}

// k_j = round(g_j / delta + u_j), rounding half away from zero, clamped to
// [-2^{b-1}, 2^{b-1}]. Requires the input to be clipped already; the
// clamp only absorbs the one extra step the dither can add at the border.
inline LevelVector quantize(std::span<const double> g_hat, const QuantConfig& cfg,
                            DitherSource& dither) {
  cfg.check();
  const double delta = cfg.delta();
  const Level max_level = Level{1} << (cfg.bits - 1);
  LevelVector levels(g_hat.size());
  for (std::size_t j = 0; j < g_hat.size(); ++j) {
    if (!(std::fabs(g_hat[j]) <= cfg.clip * (1.0 + 1e-12))) {
      throw std::invalid_argument("quantize input exceeds clip threshold; clip first");
    }
    double shifted = g_hat[j] / delta + dither.next();
    Level k = static_cast<Level>(std::llround(shifted));  // half away from zero
    if (k > max_level) k = max_level;
    if (k < -max_level) k = -max_level;
    levels[j] = k;
  }
  return levels;
}

inline std::vector<double> dequantize(const LevelVector& levels, const QuantConfig& cfg) {
  cfg.check();
  const double delta = cfg.delta();
  std::vector<double> out(levels.size());
  for (std::size_t j = 0; j < levels.size(); ++j) {
    out[j] = static_cast<double>(levels[j]) * delta;
  }
  return out;
}

// First and second empirical moments of the quantization error
// eps = dequantized - input, accumulated per coordinate and in aggregate.
struct QuantErrorStats {
  std::vector<double> mean;
  std::vector<double> mean_sq;
  double aggregate_mean = 0.0;
  double aggregate_mean_sq = 0.0;
  std::size_t samples = 0;
};

class QuantErrorAccumulator {
 public:
  explicit QuantErrorAccumulator(std::size_t dim)
      : sum_(dim, 0.0), sum_sq_(dim, 0.0), dim_(dim) {}

  void add(std::span<const double> input, std::span<const double> dequantized) {
    if (input.size() != dim_ || dequantized.size() != dim_) {
      throw std::invalid_argument("sample dimension mismatch");
    }
    for (std::size_t j = 0; j < dim_; ++j) {
      double eps = dequantized[j] - input[j];
      sum_[j] += eps;
      sum_sq_[j] += eps * eps;
    }
    ++count_;
  }

  QuantErrorStats stats() const {
    if (count_ == 0) throw std::logic_error("no samples accumulated");
    QuantErrorStats s;
    s.mean.resize(dim_);
    s.mean_sq.resize(dim_);
    double total = 0.0, total_sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      s.mean[j] = sum_[j] / static_cast<double>(count_);
      s.mean_sq[j] = sum_sq_[j] / static_cast<double>(count_);
      total += sum_[j];
      total_sq += sum_sq_[j];
    }
    s.aggregate_mean = total / static_cast<double>(count_ * dim_);
    s.aggregate_mean_sq = total_sq / static_cast<double>(count_ * dim_);
    s.samples = count_;
    return s;
  }

 private:
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
  std::size_t dim_;
  std::size_t count_ = 0;
};

inline QuantErrorStats quantization_error_stats(
    const std::vector<std::vector<double>>& inputs,
    const std::vector<std::vector<double>>& dequantized) {
  if (inputs.empty() || inputs.size() != dequantized.size()) {
    throw std::invalid_argument("need at least one (input, dequantized) sample pair");
  }
  QuantErrorAccumulator acc(inputs.front().size());
  for (std::size_t i = 0; i < inputs.size(); ++i) acc.add(inputs[i], dequantized[i]);
  return acc.stats();
}

}  // namespace flag

#endif  // FLAG_QUANTIZER_HPP_
