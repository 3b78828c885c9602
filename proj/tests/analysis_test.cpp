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

#include "flag/analysis.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support/stats.hpp"

namespace flag::analysis {
namespace {

TEST(Erfc, BasicValues) {
  EXPECT_DOUBLE_EQ(erfc(0.0), 1.0);
  // high-precision reference for erfc(1)
  EXPECT_NEAR(erfc(1.0), 0.15729920705028513, 1e-12);
  EXPECT_NEAR(erfc(-1.0), 2.0 - 0.15729920705028513, 1e-12);
}

TEST(Erfc, MatchesQuadratureOracleWithinContract) {
  for (double x = -6.0; x <= 6.0; x += 0.0625) {
    const double oracle = testing::erfc_quadrature_oracle(x);
    EXPECT_NEAR(erfc(x), oracle, 1e-10) << "x=" << x;
  }
}

TEST(ErfcInv, InverseIdentity) {
  for (const double x : {0.1, 0.5, 1.0, 2.0}) {
    EXPECT_NEAR(erfc_inv(erfc(x)), x, 1e-8);
    EXPECT_NEAR(erfc_inv(erfc(-x)), -x, 1e-8);
  }
}

TEST(ErfcInv, DomainErrors) {
  EXPECT_THROW(erfc_inv(0.0), std::domain_error);
  EXPECT_THROW(erfc_inv(2.0), std::domain_error);
  EXPECT_THROW(erfc_inv(-0.5), std::domain_error);
}

TEST(ErfcInv, HandlesTinyArguments) {
  const double y = 5e-9;
  const double x = erfc_inv(y);
  EXPECT_NEAR(erfc(x), y, y * 1e-6);
}

TEST(OverflowProbability, VanishesForLargeClip) {
  OverflowModel model{8, 0.01, 10.0, 1e-6};
  EXPECT_EQ(overflow_probability(model).value, 0.0);
}

TEST(OverflowProbability, SingleClientHalf) {
  // N=1 and C with erfc(C / sqrt(2 sigma^2)) = 1/4 gives P_o = 1/2
  const double sigma = 0.01;
  const double c = std::sqrt(2.0) * sigma * erfc_inv(0.25);
  OverflowModel model{1, sigma, c, 0.5};
  EXPECT_NEAR(overflow_probability(model).value, 0.5, 1e-9);
}

TEST(OverflowProbability, ClampsOutOfRangeBracket) {
  // tiny C: 2 erfc(..) approaches 4, the bracket would go to -3
  OverflowModel model{4, 1.0, 1e-6, 0.5};
  const auto po = overflow_probability(model);
  EXPECT_TRUE(po.clamped);
  EXPECT_EQ(po.value, 1.0);
}

TEST(MinClipThreshold, SelfConsistent) {
  for (const double delta : {1e-2, 1e-4, 1e-6}) {
    for (const std::size_t clients : {2u, 10u, 100u}) {
      const double c = min_clip_threshold(clients, 0.01, delta);
      OverflowModel model{clients, 0.01, c, delta};
      EXPECT_LE(overflow_probability(model).value, delta * (1.0 + 1e-9))
          << "N=" << clients << " delta=" << delta;
    }
  }
}

TEST(MinClipThreshold, MonotoneInClientsAndDelta) {
  double previous = 0.0;
  for (std::size_t clients = 2; clients <= 128; clients *= 2) {
    const double c = min_clip_threshold(clients, 0.01, 1e-4);
    EXPECT_GT(c, previous) << "N=" << clients;
    previous = c;
  }
  EXPECT_GT(min_clip_threshold(16, 0.01, 1e-6), min_clip_threshold(16, 0.01, 1e-2));
}

TEST(MinClipThreshold, SimulatedOverflowFreeAtTinyDelta) {
  const std::size_t clients = 100;
  const double sigma = 0.01;
  const double c = min_clip_threshold(clients, sigma, 1e-6);
  ChaChaRng rng(make_seed(99), 0);
  // 10^6 coordinates of the summed gradient, none may exceed C
  std::size_t exceedances = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double total = sigma * std::sqrt(static_cast<double>(clients)) * rng.gaussian();
    if (std::fabs(total) > c) ++exceedances;
  }
  EXPECT_EQ(exceedances, 0u);
}

TEST(CommFactor, PaperSimplification) {
  // m = 384: tau = 1 + (12.5 + log2 3) / b; at b=6 that is about 3.347
  EXPECT_NEAR(comm_factor(6, 384), 3.347, 0.001);
  const double direct = 1.0 + (12.5 + std::log2(3.0)) / 6.0;
  EXPECT_NEAR(comm_factor(6, 384), direct, 1e-12);
}

TEST(CommFactor, DecreasingInBits) {
  for (int b = 1; b < 16; ++b) {
    EXPECT_GT(comm_factor(b, 384), comm_factor(b + 1, 384));
  }
}

TEST(CommFactor, IncreasingInBucketSize) {
  EXPECT_LT(comm_factor(6, 384), comm_factor(6, 768));
}

TEST(CommFactor, TablePathReproducesReportedRow) {
  EXPECT_NEAR(comm_factor_table(6), 3.5, 1e-12);
  EXPECT_NEAR(comm_factor_table(8), 2.875, 1e-12);  // reported as 2.876
  EXPECT_NEAR(comm_factor_table(10), 2.5, 1e-12);
}

TEST(CommFactor, MeasuredBitRatio) {
  EXPECT_DOUBLE_EQ(comm_factor_measured(65536, 8), 2.0);
  EXPECT_NEAR(comm_factor_measured(65536, 6), 16.0 / 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(comm_factor_measured(65536, 10), 1.6);
}

TEST(CtBits, MatchesPacking) {
  EXPECT_EQ(ct_bits(768, 65536), 768u * 16u);
  EXPECT_EQ(plain_bits(768, 6), 768u * 6u);
}

TEST(ConvergenceBound, QuantizationTermVanishesAtHighBits) {
  ConvergenceInputs in;
  in.bits = 30;
  const auto bound = convergence_bound(in);
  EXPECT_LT(bound.quantization_term, 1e-12);
  EXPECT_NEAR(bound.total(), bound.vanilla(), 1e-12);
}

TEST(ConvergenceBound, DoublingRoundsHalvesOnlyFirstTerm) {
  ConvergenceInputs in;
  const auto one = convergence_bound(in);
  ConvergenceInputs doubled = in;
  doubled.rounds = 2 * in.rounds;
  const auto two = convergence_bound(doubled);
  EXPECT_NEAR(two.optimization_term, one.optimization_term / 2.0, 1e-15);
  EXPECT_EQ(two.sampling_term, one.sampling_term);
  EXPECT_EQ(two.quantization_term, one.quantization_term);
}

TEST(ConvergenceBound, RejectsStepAboveSmoothnessLimit) {
  ConvergenceInputs in;
  in.smoothness = 2.0;
  in.eta = 0.6;  // above 1/nu = 0.5
  EXPECT_THROW(convergence_bound(in), std::invalid_argument);
}

TEST(McOverflow, ZeroForHugeClip) {
  McOverflowConfig config;
  config.clients = 4;
  config.sigma_g = 0.01;
  config.clip = 1.0;
  const auto est = mc_overflow_estimate(config, 10000);
  EXPECT_EQ(est.p_hat, 0.0);
}

TEST(McOverflow, RequiresEnoughTrials) {
  McOverflowConfig config;
  EXPECT_THROW(mc_overflow_estimate(config, 100), std::invalid_argument);
}

// The module's core cross-validation: closed form against the Monte Carlo
// oracle over a 3x3 (N, C) grid.
TEST(McOverflow, ClosedFormMatchesOracleOnGrid) {
  const double sigma = 0.01;
  for (const std::size_t clients : {4u, 8u, 16u}) {
    for (const double z : {2.0, 2.3, 2.6}) {
      const double clip = z * sigma * std::sqrt(2.0 * static_cast<double>(clients));
      OverflowModel model{clients, sigma, clip, 0.5};
      const double formula = overflow_probability(model).value;

      McOverflowConfig config;
      config.clients = clients;
      config.sigma_g = sigma;
      config.clip = clip;
      config.seed = 1000 + clients;
      const auto est = mc_overflow_estimate(config, 100000);
      EXPECT_NEAR(est.p_hat, formula, 3.0 * est.stderr_)
          << "N=" << clients << " z=" << z << " p_hat=" << est.p_hat
          << " formula=" << formula << " se=" << est.stderr_;
    }
  }
}

}  // namespace
}  // namespace flag::analysis
