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

#ifndef FLAG_TRAINER_HPP_
#define FLAG_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flag/chacha_rng.hpp"

namespace flag {

enum class ModelKind { kLinearRegression, kLogisticRegression, kMlp, kQuadratic };

inline ModelKind model_kind_from_string(const std::string& name) {
  if (name == "linear") return ModelKind::kLinearRegression;
  if (name == "logistic") return ModelKind::kLogisticRegression;
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "quadratic") return ModelKind::kQuadratic;
  throw std::invalid_argument("unknown model kind: " + name);
}

struct ModelSpec {
  ModelKind kind = ModelKind::kLinearRegression;
  std::size_t features = 2;
  std::vector<std::size_t> hidden;  // mlp only
  double smoothness = 1.0;          // nu, quadratic only

  // Flat parameter count. For the mlp the flattening is layer-major and
  // row-major within a layer: W_l as fan_out rows of fan_in weights,
  // followed by the fan_out biases, for each layer in order.
  std::size_t param_count() const {
    switch (kind) {
      case ModelKind::kLinearRegression:
      case ModelKind::kLogisticRegression:
      case ModelKind::kQuadratic:
        return features;
      case ModelKind::kMlp: {
        std::size_t count = 0;
        std::size_t fan_in = features;
        for (std::size_t width : hidden) {
          count += (fan_in + 1) * width;
          fan_in = width;
        }
        count += fan_in + 1;  // scalar output unit
        return count;
      }
    }
    return 0;
  }
};

struct Model {
  ModelSpec spec;
  std::vector<double> params;
};

inline Model init_model(const ModelSpec& spec, ChaChaRng& rng) {
  Model model;
  model.spec = spec;
  model.params.resize(spec.param_count());
  if (spec.kind == ModelKind::kMlp) {
    std::size_t offset = 0;
    std::size_t fan_in = spec.features;
    std::vector<std::size_t> widths(spec.hidden);
    widths.push_back(1);
    for (std::size_t width : widths) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < width * fan_in; ++i) {
        model.params[offset++] = scale * rng.gaussian();
      }
      for (std::size_t i = 0; i < width; ++i) model.params[offset++] = 0.0;
      fan_in = width;
    }
  } else {
    for (auto& p : model.params) p = 0.0;
  }
  return model;
}

struct DatasetPartition {
  std::vector<std::vector<double>> features;
  std::vector<double> labels;
  std::uint32_t owner = 0;

  std::size_t size() const { return features.size(); }
};

struct SgdConfig {
  double eta = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 8;

  void check() const {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

struct MlpWorkspace {
  std::vector<std::vector<double>> activations;  // per layer outputs
  std::vector<std::vector<double>> deltas;
};

// Forward pass; returns the pre-sigmoid output logit.
inline double mlp_forward(const Model& model, std::span<const double> x,
                          MlpWorkspace& ws) {
  const auto& spec = model.spec;
  std::vector<std::size_t> widths(spec.hidden);
  widths.push_back(1);
  ws.activations.assign(widths.size(), {});
  std::size_t offset = 0;
  std::size_t fan_in = spec.features;
  std::span<const double> input = x;
  double logit = 0.0;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t width = widths[l];
    auto& out = ws.activations[l];
    out.resize(width);
    for (std::size_t r = 0; r < width; ++r) {
      const double* w = model.params.data() + offset + r * fan_in;
      double z = model.params[offset + width * fan_in + r];
      for (std::size_t c = 0; c < fan_in; ++c) z += w[c] * input[c];
      out[r] = (l + 1 == widths.size()) ? z : std::tanh(z);
    }
    offset += (fan_in + 1) * width;
    fan_in = width;
    input = out;
    if (l + 1 == widths.size()) logit = out[0];
  }
  return logit;
}

// Accumulates d loss / d params into grad for one (x, y) sample.
inline void mlp_backward(const Model& model, std::span<const double> x, double y,
                         MlpWorkspace& ws, std::vector<double>& grad) {
  const auto& spec = model.spec;
  std::vector<std::size_t> widths(spec.hidden);
  widths.push_back(1);
  const double logit = mlp_forward(model, x, ws);
  const double dlogit = sigmoid(logit) - y;

  // layer parameter offsets
  std::vector<std::size_t> offsets(widths.size());
  std::size_t offset = 0;
  std::size_t fan_in = spec.features;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    offsets[l] = offset;
    offset += (fan_in + 1) * widths[l];
    fan_in = widths[l];
  }

  ws.deltas.assign(widths.size(), {});
  ws.deltas.back() = {dlogit};
  for (std::size_t l = widths.size() - 1; l-- > 0;) {
    const std::size_t width = widths[l];
    const std::size_t next_width = widths[l + 1];
    ws.deltas[l].assign(width, 0.0);
    const double* w_next = model.params.data() + offsets[l + 1];
    for (std::size_t r = 0; r < next_width; ++r) {
      const double d = ws.deltas[l + 1][r];
      for (std::size_t c = 0; c < width; ++c) {
        ws.deltas[l][c] += d * w_next[r * width + c];
      }
    }
    for (std::size_t c = 0; c < width; ++c) {
      const double a = ws.activations[l][c];
      ws.deltas[l][c] *= (1.0 - a * a);  // tanh'
    }
  }

  fan_in = spec.features;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::size_t width = widths[l];
    std::span<const double> input =
        (l == 0) ? x : std::span<const double>(ws.activations[l - 1]);
    double* gw = grad.data() + offsets[l];
    for (std::size_t r = 0; r < width; ++r) {
      const double d = ws.deltas[l][r];
      for (std::size_t c = 0; c < fan_in; ++c) gw[r * fan_in + c] += d * input[c];
      gw[width * fan_in + r] += d;
    }
    fan_in = width;
  }
}

}  // namespace detail

inline double sample_loss(const Model& model, std::span<const double> x, double y) {
  switch (model.spec.kind) {
    case ModelKind::kLinearRegression: {
      const double r = detail::dot(model.params, x) - y;
      return 0.5 * r * r;
    }
    case ModelKind::kLogisticRegression: {
      const double z = detail::dot(model.params, x);
      // -[y log p + (1-y) log(1-p)] in the overflow-safe form
      return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::fabs(z)));
    }
    case ModelKind::kMlp: {
      detail::MlpWorkspace ws;
      const double z = detail::mlp_forward(model, x, ws);
      return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::fabs(z)));
    }
    case ModelKind::kQuadratic: {
      const double nu = model.spec.smoothness;
      double sq = 0.0;
      for (double p : model.params) sq += p * p;
      return 0.5 * nu * sq + detail::dot(model.params, x);
    }
  }
  throw std::logic_error("unreachable model kind");
}

// Adds d loss / d theta for one sample into grad.
inline void accumulate_sample_gradient(const Model& model, std::span<const double> x,
                                       double y, std::vector<double>& grad) {
  switch (model.spec.kind) {
    case ModelKind::kLinearRegression: {
      const double r = detail::dot(model.params, x) - y;
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += r * x[j];
      return;
    }
    case ModelKind::kLogisticRegression: {
      const double p = detail::sigmoid(detail::dot(model.params, x));
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += (p - y) * x[j];
      return;
    }
    case ModelKind::kMlp: {
      detail::MlpWorkspace ws;
      detail::mlp_backward(model, x, y, ws, grad);
      return;
    }
    case ModelKind::kQuadratic: {
      const double nu = model.spec.smoothness;
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += nu * model.params[j] + x[j];
      return;
    }
  }
  throw std::logic_error("unreachable model kind");
}

// Mean gradient over the batch, plus the weight-decay term when
// configured. Summation runs in batch-index order so runs are bit-exact
// reproducible.
inline std::vector<double> local_gradient(const Model& model, const DatasetPartition& data,
                                          std::span<const std::size_t> batch,
                                          const SgdConfig& config) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<double> grad(model.params.size(), 0.0);
  for (std::size_t idx : batch) {
    if (idx >= data.size()) throw std::out_of_range("batch index outside partition");
    accumulate_sample_gradient(model, data.features[idx], data.labels[idx], grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < grad.size(); ++j) {
    grad[j] *= inv;
    if (config.weight_decay > 0.0) grad[j] += config.weight_decay * model.params[j];
  }
  return grad;
}

// Classical momentum: v' = momentum * v + g; the update direction is v'.
inline std::vector<double> momentum_step(std::vector<double>& velocity,
                                         std::span<const double> grad,
                                         const SgdConfig& config) {
  if (velocity.empty()) velocity.assign(grad.size(), 0.0);
  if (velocity.size() != grad.size()) throw std::invalid_argument("velocity size mismatch");
  for (std::size_t j = 0; j < grad.size(); ++j) {
    velocity[j] = config.momentum * velocity[j] + grad[j];
  }
  return velocity;
}

inline double partition_loss(const Model& model, const DatasetPartition& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += sample_loss(model, data.features[i], data.labels[i]);
  }
  return data.size() ? total / static_cast<double>(data.size()) : 0.0;
}

inline double global_loss(const Model& model, const std::vector<DatasetPartition>& parts) {
  double total = 0.0;
  for (const auto& p : parts) total += partition_loss(model, p);
  return parts.empty() ? 0.0 : total / static_cast<double>(parts.size());
}

// Full-batch gradient of the global objective (no weight decay), for
// metric reporting and oracle checks.
inline std::vector<double> global_gradient(const Model& model,
                                           const std::vector<DatasetPartition>& parts) {
  std::vector<double> grad(model.params.size(), 0.0);
  SgdConfig plain;
  plain.weight_decay = 0.0;
  for (const auto& p : parts) {
    std::vector<std::size_t> all(p.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto g = local_gradient(model, p, all, plain);
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += g[j];
  }
  for (auto& v : grad) v /= static_cast<double>(parts.size());
  return grad;
}

inline double classification_accuracy(const Model& model,
                                      const std::vector<DatasetPartition>& parts) {
  std::size_t correct = 0, total = 0;
  detail::MlpWorkspace ws;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      double z;
      if (model.spec.kind == ModelKind::kMlp) {
        z = detail::mlp_forward(model, p.features[i], ws);
      } else {
        z = detail::dot(model.params, p.features[i]);
      }
      const double predicted = z >= 0.0 ? 1.0 : 0.0;
      correct += (predicted == p.labels[i]) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::string task = "logistic";  // logistic | linear | quadratic
  std::size_t clients = 8;
  std::size_t samples_per_client = 128;
  std::size_t features = 16;
  double margin = 0.1;        // logistic: minimum |w*.x| of generated samples
  double noise_std = 0.0;     // linear: label noise std
  double label_skew = 0.0;    // logistic: fraction of samples forced to the
                              // client's preferred label
  double gradient_noise = 1.0;  // quadratic: sigma with E||xi||^2 = sigma^2

  void check() const {
    if (task != "logistic" && task != "linear" && task != "quadratic") {
      throw std::invalid_argument("unknown synthetic task: " + task);
    }
    if (clients < 1 || samples_per_client < 1 || features < 1) {
      throw std::invalid_argument("synthetic sizes must be positive");
    }
    if (label_skew < 0.0 || label_skew >= 1.0) {
      throw std::invalid_argument("label_skew must be in [0, 1)");
    }
  }
};

// Deterministically generates disjoint per-client partitions. Logistic
// data is separable through the origin with the requested margin, so the
// through-origin models can reach high accuracy.
inline std::vector<DatasetPartition> make_synthetic(const SyntheticSpec& spec,
                                                    std::uint64_t seed) {
  spec.check();
  constexpr std::uint32_t kDataDomain = 0x44415441u;  // "DATA"
  std::vector<DatasetPartition> parts(spec.clients);

  // shared ground-truth direction for the supervised tasks
  ChaChaRng shared(make_seed(seed), ~std::uint64_t{0}, kDataDomain);
  std::vector<double> w_star(spec.features);
  double norm = 0.0;
  for (auto& w : w_star) {
    w = shared.gaussian();
    norm += w * w;
  }
  norm = std::sqrt(norm);
  for (auto& w : w_star) w /= norm;

  for (std::size_t i = 0; i < spec.clients; ++i) {
    ChaChaRng rng(make_seed(seed), i, kDataDomain);
    auto& part = parts[i];
    part.owner = static_cast<std::uint32_t>(i);
    part.features.resize(spec.samples_per_client);
    part.labels.resize(spec.samples_per_client);
    for (std::size_t s = 0; s < spec.samples_per_client; ++s) {
      auto& x = part.features[s];
      x.resize(spec.features);
      if (spec.task == "quadratic") {
        const double coord_std = spec.gradient_noise / std::sqrt(static_cast<double>(spec.features));
        for (auto& v : x) v = coord_std * rng.gaussian();
        part.labels[s] = 0.0;
        continue;
      }
      double projection = 0.0;
      do {
        projection = 0.0;
        for (std::size_t j = 0; j < spec.features; ++j) {
          x[j] = rng.gaussian();
          projection += w_star[j] * x[j];
        }
      } while (spec.task == "logistic" && std::fabs(projection) < spec.margin);
      if (spec.task == "linear") {
        part.labels[s] = projection + spec.noise_std * rng.gaussian();
      } else {
        double label = projection >= 0.0 ? 1.0 : 0.0;
        if (spec.label_skew > 0.0) {
          const double preferred = static_cast<double>(i % 2);
          if (label != preferred && rng.uniform_real() < spec.label_skew) {
            for (auto& v : x) v = -v;
            label = preferred;
          }
        }
        part.labels[s] = label;
      }
    }
  }
  return parts;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string label_column;
};

// Parses a comma-separated file with a header row. Non-numeric fields and
// ragged rows are rejected with their 1-based row number.
inline DatasetPartition load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  std::size_t label_index = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == schema.label_column) label_index = i;
  }
  if (label_index == header.size()) {
    throw std::runtime_error("label column '" + schema.label_column + "' not found in " + path);
  }

  DatasetPartition part;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t consumed = 0;
        values.push_back(std::stod(field, &consumed));
        if (consumed != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error("row " + std::to_string(row) + ": non-numeric field '" +
                                 field + "'");
      }
    }
    if (values.size() != header.size()) {
      throw std::runtime_error("row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(values.size()));
    }
    std::vector<double> x;
    x.reserve(values.size() - 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i != label_index) x.push_back(values[i]);
    }
    part.features.push_back(std::move(x));
    part.labels.push_back(values[label_index]);
  }
  if (part.features.empty()) throw std::runtime_error("dataset has no data rows: " + path);
  return part;
}

}  // namespace flag

#endif  // FLAG_TRAINER_HPP_
