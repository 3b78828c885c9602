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

#ifndef FLAG_CONFIG_HPP_
#define FLAG_CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flag/fl_protocol.hpp"
#include "flag/lwe.hpp"
#include "flag/trainer.hpp"

namespace flag {

// Configuration problems (schema, ranges) are distinct from runtime
// protocol failures so the CLI can map them to different exit codes.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ClipMode { kAdaptive, kFixed, kTargetDelta };

inline ClipMode clip_mode_from_string(const std::string& name) {
  if (name == "adaptive") return ClipMode::kAdaptive;
  if (name == "fixed") return ClipMode::kFixed;
  if (name == "target_delta") return ClipMode::kTargetDelta;
  throw ConfigError("clip_mode: must be adaptive, fixed or target_delta, got '" + name + "'");
}

struct DatasetConfig {
  std::string type = "synthetic";  // synthetic | csv
  SyntheticSpec synthetic;
  std::string csv_path;
  std::string csv_label_column;
  std::uint64_t seed = 1234;
};

struct RunSeeds {
  std::uint64_t matrix = 1;
  std::uint64_t client_rng = 2;
  std::uint64_t client_dither = 3;
};

// Run description mirrored by resolved-config.json. Defaults follow the
// experimental setting: momentum SGD with eta 0.01, momentum 0.9, weight
// decay 0.0005 on (n, m, q) = (256, 768, 65536).
struct RunConfig {
  AggregationMode mode = AggregationMode::kFlag;
  LweParams crypto;                       // n, m, q, b
  std::size_t clients = 8;                // N
  std::size_t rounds = 50;                // T
  double eta = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 8;             // B
  ClipMode clip_mode = ClipMode::kAdaptive;
  double clip_initial = 1.0;              // C_0
  double sigma_g = 0.01;                  // target_delta clip rule input
  double delta_overflow = 1e-6;
  double sigma_e = -1.0;                  // baseline error std; <0 selects the
                                          // printed default q/2^b * sqrt(12)
  bool sigma_e_divided = false;           // use q/2^b / sqrt(12) instead
  ModelSpec model;
  DatasetConfig dataset;
  RunSeeds seeds;

  double resolved_sigma_e() const {
    const double step = static_cast<double>(crypto.q) / std::pow(2.0, crypto.b);
    if (sigma_e >= 0.0) return sigma_e;
    return sigma_e_divided ? step / std::sqrt(12.0) : step * std::sqrt(12.0);
  }

  void validate() const {
    try {
      crypto.check();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("crypto: ") + e.what());
    }
    if (clients < 1) throw ConfigError("clients: must be at least 1");
    if ((mode == AggregationMode::kFlag || mode == AggregationMode::kLweBaseline) && clients < 2) {
      throw ConfigError("clients: key agreement needs at least 2 clients");
    }
    if (rounds < 1) throw ConfigError("rounds: must be at least 1");
    if (!(eta > 0.0)) throw ConfigError("eta: must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum: must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay: must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
    if (!(clip_initial > 0.0)) throw ConfigError("clip_initial: must be positive");
    if (clip_mode == ClipMode::kTargetDelta) {
      if (!(sigma_g > 0.0)) throw ConfigError("sigma_g: must be positive for target_delta");
      if (!(delta_overflow > 0.0 && delta_overflow < 1.0)) {
        throw ConfigError("delta_overflow: must be in (0, 1)");
      }
    }
    if (model.features < 1) throw ConfigError("model.features: must be positive");
    if (model.kind == ModelKind::kMlp) {
      for (std::size_t h : model.hidden) {
        if (h < 1) throw ConfigError("model.hidden: layer sizes must be positive");
      }
    }
    if (model.kind == ModelKind::kQuadratic && !(model.smoothness > 0.0)) {
      throw ConfigError("model.nu: must be positive");
    }
    if (dataset.type != "synthetic" && dataset.type != "csv") {
      throw ConfigError("dataset.type: must be synthetic or csv");
    }
    if (dataset.type == "csv" && dataset.csv_path.empty()) {
      throw ConfigError("dataset.path: required for csv datasets");
    }
    if (dataset.type == "csv" && dataset.csv_label_column.empty()) {
      throw ConfigError("dataset.label_column: required for csv datasets");
    }
    if (dataset.type == "synthetic") {
      try {
        dataset.synthetic.check();
      } catch (const std::exception& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
      }
    }
  }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    cfg.mode = aggregation_mode_from_string(detail::get_or<std::string>(j, "mode", "flag"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.crypto.n = detail::get_or<std::size_t>(j, "n", cfg.crypto.n);
  cfg.crypto.m = detail::get_or<std::size_t>(j, "m", cfg.crypto.m);
  cfg.crypto.q = detail::get_or<std::uint64_t>(j, "q", cfg.crypto.q);
  cfg.crypto.b = detail::get_or<int>(j, "b", cfg.crypto.b);
  cfg.clients = detail::get_or<std::size_t>(j, "N", cfg.clients);
  cfg.rounds = detail::get_or<std::size_t>(j, "T", cfg.rounds);
  cfg.eta = detail::get_or<double>(j, "eta", cfg.eta);
  cfg.momentum = detail::get_or<double>(j, "momentum", cfg.momentum);
  cfg.weight_decay = detail::get_or<double>(j, "weight_decay", cfg.weight_decay);
  cfg.batch_size = detail::get_or<std::size_t>(j, "batch_size", cfg.batch_size);
  cfg.clip_mode = clip_mode_from_string(detail::get_or<std::string>(j, "clip_mode", "adaptive"));
  cfg.clip_initial = detail::get_or<double>(j, "C0", cfg.clip_initial);
  cfg.sigma_g = detail::get_or<double>(j, "sigma_g", cfg.sigma_g);
  cfg.delta_overflow = detail::get_or<double>(j, "delta_overflow", cfg.delta_overflow);
  cfg.sigma_e = detail::get_or<double>(j, "sigma_e", cfg.sigma_e);
  cfg.sigma_e_divided = detail::get_or<bool>(j, "sigma_e_divided", cfg.sigma_e_divided);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    try {
      cfg.model.kind = model_kind_from_string(detail::get_or<std::string>(m, "kind", "logistic"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    cfg.model.features = detail::get_or<std::size_t>(m, "features", cfg.model.features);
    cfg.model.hidden = detail::get_or<std::vector<std::size_t>>(m, "hidden", {});
    cfg.model.smoothness = detail::get_or<double>(m, "nu", 1.0);
  }

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset.type = detail::get_or<std::string>(d, "type", "synthetic");
    cfg.dataset.seed = detail::get_or<std::uint64_t>(d, "seed", cfg.dataset.seed);
    cfg.dataset.csv_path = detail::get_or<std::string>(d, "path", "");
    cfg.dataset.csv_label_column = detail::get_or<std::string>(d, "label_column", "");
    auto& syn = cfg.dataset.synthetic;
    syn.task = detail::get_or<std::string>(d, "task", syn.task);
    syn.samples_per_client = detail::get_or<std::size_t>(d, "samples_per_client",
                                                         syn.samples_per_client);
    syn.margin = detail::get_or<double>(d, "margin", syn.margin);
    syn.noise_std = detail::get_or<double>(d, "noise_std", syn.noise_std);
    syn.label_skew = detail::get_or<double>(d, "label_skew", syn.label_skew);
    syn.gradient_noise = detail::get_or<double>(d, "gradient_noise", syn.gradient_noise);
  }
  cfg.dataset.synthetic.clients = cfg.clients;
  cfg.dataset.synthetic.features = cfg.model.features;

  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    cfg.seeds.matrix = detail::get_or<std::uint64_t>(s, "matrix", cfg.seeds.matrix);
    cfg.seeds.client_rng = detail::get_or<std::uint64_t>(s, "client_rng", cfg.seeds.client_rng);
    cfg.seeds.client_dither =
        detail::get_or<std::uint64_t>(s, "client_dither", cfg.seeds.client_dither);
  }

  cfg.validate();
  return cfg;
}

inline std::string mode_to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::kFlag: return "flag";
    case AggregationMode::kVanilla: return "vanilla";
    case AggregationMode::kQuantizedPlain: return "quantized_plain";
    case AggregationMode::kLweBaseline: return "lwe_baseline";
  }
  return "flag";
}

inline std::string model_kind_to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression: return "linear";
    case ModelKind::kLogisticRegression: return "logistic";
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kQuadratic: return "quadratic";
  }
  return "linear";
}

inline std::string clip_mode_to_string(ClipMode mode) {
  switch (mode) {
    case ClipMode::kAdaptive: return "adaptive";
    case ClipMode::kFixed: return "fixed";
    case ClipMode::kTargetDelta: return "target_delta";
  }
  return "adaptive";
}

// Full round-trippable form with every default materialized; rerunning
// from this document reproduces the metrics byte for byte.
inline nlohmann::json resolved_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["mode"] = mode_to_string(cfg.mode);
  j["n"] = cfg.crypto.n;
  j["m"] = cfg.crypto.m;
  j["q"] = cfg.crypto.q;
  j["b"] = cfg.crypto.b;
  j["N"] = cfg.clients;
  j["T"] = cfg.rounds;
  j["eta"] = cfg.eta;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["clip_mode"] = clip_mode_to_string(cfg.clip_mode);
  j["C0"] = cfg.clip_initial;
  j["sigma_g"] = cfg.sigma_g;
  j["delta_overflow"] = cfg.delta_overflow;
  j["sigma_e"] = cfg.resolved_sigma_e();
  j["sigma_e_divided"] = cfg.sigma_e_divided;
  j["model"] = {{"kind", model_kind_to_string(cfg.model.kind)},
                {"features", cfg.model.features},
                {"hidden", cfg.model.hidden},
                {"nu", cfg.model.smoothness}};
  if (cfg.dataset.type == "csv") {
    j["dataset"] = {{"type", "csv"},
                    {"path", cfg.dataset.csv_path},
                    {"label_column", cfg.dataset.csv_label_column}};
  } else {
    j["dataset"] = {{"type", "synthetic"},
                    {"task", cfg.dataset.synthetic.task},
                    {"samples_per_client", cfg.dataset.synthetic.samples_per_client},
                    {"margin", cfg.dataset.synthetic.margin},
                    {"noise_std", cfg.dataset.synthetic.noise_std},
                    {"label_skew", cfg.dataset.synthetic.label_skew},
                    {"gradient_noise", cfg.dataset.synthetic.gradient_noise},
                    {"seed", cfg.dataset.seed}};
  }
  j["seeds"] = {{"matrix", cfg.seeds.matrix},
                {"client_rng", cfg.seeds.client_rng},
                {"client_dither", cfg.seeds.client_dither}};
  return j;
}

}  // namespace flag

#endif  // FLAG_CONFIG_HPP_
