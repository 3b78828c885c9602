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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flag/analysis.hpp"
#include "flag/config.hpp"
#include "flag/key_agreement.hpp"
#include "flag/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int fail(int code, const std::string& kind, const std::string& message) {
  nlohmann::json err{{"error", {{"kind", kind}, {"message", message}}}};
  std::cout << err.dump(2) << "\n";
  return code;
}

int run_train(const std::string& config_path, const std::string& out_override) {
  nlohmann::json doc;
  {
    std::ifstream in(config_path);
    if (!in) return fail(kExitConfig, "config", "cannot open config file: " + config_path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      return fail(kExitConfig, "config", std::string("invalid JSON: ") + e.what());
    }
  }

  std::string out_dir = out_override;
  if (out_dir.empty() && doc.contains("output_dir")) {
    out_dir = doc["output_dir"].get<std::string>();
  }
  if (out_dir.empty()) out_dir = "out";

  flag::RunConfig cfg;
  try {
    cfg = flag::parse_run_config(doc);
  } catch (const flag::ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kExitConfig, "config", e.what());
  }

  try {
    std::filesystem::create_directories(out_dir);

    flag::FederatedRun run(cfg);
    flag::RunResult result = run.run();

    {
      std::ofstream csv(out_dir + "/metrics.csv", std::ios::binary);
      flag::write_metrics_csv(csv, result.rounds);
    }
    {
      nlohmann::json resolved = flag::resolved_config_json(cfg);
      resolved["output_dir"] = out_dir;
      std::ofstream rc(out_dir + "/resolved-config.json", std::ios::binary);
      rc << resolved.dump(2) << "\n";
    }
    {
      nlohmann::json summary;
      summary["mode"] = flag::mode_to_string(cfg.mode);
      summary["rounds"] = result.rounds.size();
      summary["final_loss"] = result.final_loss;
      if (result.final_accuracy >= 0.0) summary["final_accuracy"] = result.final_accuracy;
      summary["total_upload_bytes"] = result.transport.upload_bytes;
      summary["total_broadcast_bytes"] = result.transport.broadcast_bytes;
      summary["key_agreement_bytes"] = result.transport.key_agreement_bytes;
      summary["tau_measured"] = result.tau_measured;
      summary["total_overflows"] = result.total_overflows;
      std::ofstream sj(out_dir + "/summary.json", std::ios::binary);
      sj << summary.dump(2) << "\n";
      std::cout << summary.dump(2) << "\n";
    }
    return kExitOk;
  } catch (const flag::ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "protocol", e.what());
  }
}

int run_analyze_comm(int bits, std::size_t bucket, std::uint64_t q) {
  nlohmann::json out;
  out["inputs"] = {{"b", bits}, {"m", bucket}, {"q", q}};
  out["tau_formula"] = flag::analysis::comm_factor(bits, bucket);
  out["tau_table"] = flag::analysis::comm_factor_table(bits);
  out["tau_measured"] = flag::analysis::comm_factor_measured(q, bits);
  out["plain_bits_per_coord"] = bits;
  out["ct_bits_per_coord"] = flag::wire::bits_per_residue(q);
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int run_analyze_overflow(std::size_t clients, double sigma, double delta, double clip,
                         bool with_mc, std::size_t trials, std::uint64_t seed) {
  nlohmann::json out;
  const double min_clip = flag::analysis::min_clip_threshold(clients, sigma, delta);
  const double used_clip = clip > 0.0 ? clip : min_clip;
  flag::analysis::OverflowModel model{clients, sigma, used_clip, delta};
  const auto po = flag::analysis::overflow_probability(model);
  out["inputs"] = {{"N", clients}, {"sigma_g", sigma}, {"delta", delta}, {"C", used_clip}};
  out["min_clip_threshold"] = min_clip;
  out["formula_value"] = po.value;
  out["clamped"] = po.clamped;
  if (with_mc) {
    flag::analysis::McOverflowConfig mc;
    mc.clients = clients;
    mc.sigma_g = sigma;
    mc.clip = used_clip;
    mc.seed = seed;
    const auto est = flag::analysis::mc_overflow_estimate(mc, trials);
    out["mc_estimate"] = est.p_hat;
    out["stderr"] = est.stderr_;
    out["verdict"] =
        std::fabs(est.p_hat - po.value) <= 3.0 * est.stderr_ ? "consistent" : "inconsistent";
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int run_analyze_bound(const flag::analysis::ConvergenceInputs& inputs) {
  const auto bound = flag::analysis::convergence_bound(inputs);
  nlohmann::json out;
  out["inputs"] = {{"F0_gap", inputs.f0_gap}, {"T", inputs.rounds}, {"eta", inputs.eta},
                   {"sigma", inputs.sigma},   {"B", inputs.batch},  {"N", inputs.clients},
                   {"d", inputs.dim},         {"C", inputs.clip},   {"b", inputs.bits},
                   {"nu", inputs.smoothness}};
  out["optimization_term"] = bound.optimization_term;
  out["sampling_term"] = bound.sampling_term;
  out["quantization_term"] = bound.quantization_term;
  out["vanilla_bound"] = bound.vanilla();
  out["total_bound"] = bound.total();
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int run_keydemo(std::size_t clients, std::size_t n, std::uint64_t q, std::uint64_t seed) {
  std::vector<flag::SecretKey> secrets(clients);
  std::vector<flag::ChaChaRng> rngs;
  for (std::size_t i = 0; i < clients; ++i) {
    rngs.emplace_back(flag::make_seed(seed), i, 0x4b445355u);  // "KDSU"
    secrets[i].entries.resize(n);
    for (auto& e : secrets[i].entries) e = rngs.back().uniform_below(q);
  }

  std::size_t total_bytes = 0;
  const auto transcript = flag::run_key_sum(
      secrets, q, rngs, 0,
      [&total_bytes](std::uint32_t, std::uint32_t, std::size_t bytes) { total_bytes += bytes; });

  std::vector<flag::Residue> direct(n, 0);
  for (const auto& s : secrets) {
    for (std::size_t j = 0; j < n; ++j) direct[j] = (direct[j] + s.entries[j]) % q;
  }

  nlohmann::json out;
  out["clients"] = clients;
  out["n"] = n;
  out["q"] = q;
  out["share_messages"] = clients * clients;
  out["share_bytes"] = total_bytes;
  out["partial_sums"] = transcript.partial_sums;
  out["s_sum"] = transcript.key_sum;
  out["direct_sum"] = direct;
  out["verdict"] = (direct == transcript.key_sum) ? "VERIFIED" : "MISMATCH";
  std::cout << out.dump(2) << "\n";
  return (direct == transcript.key_sum) ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLAG quantum-safe federated aggregation simulator"};
  app.require_subcommand(1);

  // train
  std::string config_path;
  std::string out_dir;
  auto* train = app.add_subcommand("train", "run a federated training experiment");
  train->add_option("config", config_path, "JSON run config")->required();
  train->add_option("--out", out_dir, "output directory (overrides config)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "closed-form calculators and oracles");
  analyze->require_subcommand(1);

  int comm_bits = 6;
  std::size_t comm_m = 384;
  std::uint64_t comm_q = 65536;
  auto* comm = analyze->add_subcommand("comm", "communication factor");
  comm->add_option("--b", comm_bits, "quantization bits");
  comm->add_option("--m", comm_m, "bucket size");
  comm->add_option("--q", comm_q, "modulus");

  std::size_t ov_clients = 100;
  double ov_sigma = 0.01, ov_delta = 1e-6, ov_clip = -1.0;
  bool ov_mc = false;
  std::size_t ov_trials = 100000;
  std::uint64_t ov_seed = 1;
  auto* overflow = analyze->add_subcommand("overflow", "overflow probability and clip bound");
  overflow->add_option("--N", ov_clients, "clients");
  overflow->add_option("--sigma", ov_sigma, "per-coordinate gradient std");
  overflow->add_option("--delta", ov_delta, "target overflow probability");
  overflow->add_option("--C", ov_clip, "clip threshold (default: the delta bound)");
  overflow->add_flag("--mc", ov_mc, "run the Monte Carlo cross-check");
  overflow->add_option("--trials", ov_trials, "Monte Carlo trials");
  overflow->add_option("--seed", ov_seed, "Monte Carlo seed");

  flag::analysis::ConvergenceInputs ci;
  auto* bound = analyze->add_subcommand("bound", "convergence error bound");
  bound->add_option("--f0gap", ci.f0_gap, "F(theta_0) - F(theta_*)");
  bound->add_option("--T", ci.rounds, "rounds");
  bound->add_option("--eta", ci.eta, "step size");
  bound->add_option("--sigma", ci.sigma, "gradient deviation bound");
  bound->add_option("--B", ci.batch, "batch size");
  bound->add_option("--N", ci.clients, "clients");
  bound->add_option("--d", ci.dim, "model dimension");
  bound->add_option("--C", ci.clip, "clip threshold");
  bound->add_option("--b", ci.bits, "quantization bits");
  bound->add_option("--nu", ci.smoothness, "smoothness constant");

  // keydemo
  std::size_t kd_clients = 3, kd_n = 8;
  std::uint64_t kd_q = 65536, kd_seed = 1;
  auto* keydemo = app.add_subcommand("keydemo", "demonstrate the key-sum agreement");
  keydemo->add_option("--N", kd_clients, "clients (at least 2)");
  keydemo->add_option("--n", kd_n, "secret dimension");
  keydemo->add_option("--q", kd_q, "modulus");
  keydemo->add_option("--seed", kd_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return run_train(config_path, out_dir);
    if (*comm) return run_analyze_comm(comm_bits, comm_m, comm_q);
    if (*overflow) {
      return run_analyze_overflow(ov_clients, ov_sigma, ov_delta, ov_clip, ov_mc, ov_trials,
                                  ov_seed);
    }
    if (*bound) return run_analyze_bound(ci);
    if (*keydemo) {
      if (kd_clients < 2) return fail(kExitConfig, "config", "N: key demo needs at least 2 clients");
      return run_keydemo(kd_clients, kd_n, kd_q, kd_seed);
    }
  } catch (const std::domain_error& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "protocol", e.what());
  }
  return kExitConfig;
}
