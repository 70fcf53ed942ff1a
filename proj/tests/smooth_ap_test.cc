/*
 * Copyright 2026 The ranksmooth Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ranksmooth/smooth_ap.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.h"
#include "ranksmooth/reference.h"
#include "ranksmooth/score_backprop.h"

namespace ranksmooth {
namespace {

EmbeddingBatch RandomBatch(std::size_t classes, std::size_t per_class, std::size_t dim,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> ids;
  for (std::size_t c = 0; c < classes; ++c) ids.insert(ids.end(), per_class, static_cast<int>(c));
  return {oracle::random_unit_rows(classes * per_class, dim, rng), ids};
}

ScoredSet RandomSet(std::size_t n, std::mt19937_64& rng) {
  ScoredSet s;
  s.scores = oracle::distinct_scores(n, rng);
  for (std::size_t i = 0; i < n; ++i) s.labels.push_back(rng() % 3 == 0);
  s.labels[rng() % n] = true;
  return s;
}

TEST(Sigmoid, Identities) {
  for (double tau : {1.0, 0.1, 0.01}) {
    for (double x = -0.5; x <= 0.5; x += 0.0173) {
      const double g = sigmoid(x, tau);
      EXPECT_NEAR(g + sigmoid(-x, tau), 1.0, 1e-12);
      EXPECT_NEAR(sigmoid_grad(x, tau), g * (1.0 - g) / tau, 1e-12 / tau);
    }
    EXPECT_DOUBLE_EQ(sigmoid_grad(0.0, tau), 1.0 / (4.0 * tau));
  }
}

TEST(Sigmoid, SaturatesWithoutOverflow) {
  EXPECT_EQ(sigmoid(1e6, 1e-3), 1.0);
  EXPECT_EQ(sigmoid(-1e6, 1e-3), 0.0);
  EXPECT_EQ(sigmoid_grad(1e6, 1e-3), 0.0);
  EXPECT_FALSE(std::isnan(sigmoid_grad(-1e6, 1e-6)));
}

TEST(Sigmoid, RejectsNonPositiveTemperature) {
  EXPECT_THROW(sigmoid(0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(sigmoid_grad(0.1, -1.0), std::invalid_argument);
  EXPECT_THROW((SmoothApConfig{0.0, 0.005}.validate()), std::invalid_argument);
  EXPECT_THROW((SmoothApConfig{0.01, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((SmoothApConfig{std::nan(""), 0.005}.validate()), std::invalid_argument);
}

TEST(SmoothApQuery, FrozenValue) {
  // High-precision evaluation of the relaxed ratio for this three-item set.
  ScoredSet s{{0.3, 0.1, 0.2}, {true, true, false}};
  EXPECT_NEAR(smooth_ap_query(s, {0.1, 0.005}), 0.76317912396326153, 1e-14);
}

TEST(SmoothApQuery, InUnitIntervalShiftInvariant) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const ScoredSet s = RandomSet(2 + rng() % 14, rng);
    const SmoothApConfig cfg{trial % 2 ? 0.05 : 0.5, 0.005};
    const double ap = smooth_ap_query(s, cfg);
    EXPECT_GT(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    ScoredSet shifted = s;
    for (double& v : shifted.scores) v += 0.37;
    EXPECT_NEAR(smooth_ap_query(shifted, cfg), ap, 1e-12);
  }
}

TEST(SmoothApQuery, RaisingANegativeNeverHelps) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    ScoredSet s = RandomSet(10, rng);
    std::size_t neg = 10;
    for (std::size_t i = 0; i < 10; ++i) {
      if (!s.labels[i]) neg = i;
    }
    if (neg == 10) continue;
    const SmoothApConfig cfg{0.1, 0.005};
    const double before = smooth_ap_query(s, cfg);
    s.scores[neg] += 0.05 + 0.2 * static_cast<double>(trial % 5);
    EXPECT_LE(smooth_ap_query(s, cfg), before + 1e-15);
  }
}

TEST(SmoothApQuery, ApproachesExactApAsTemperatureFalls) {
  std::mt19937_64 rng(23);
  int checked = 0;
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  while (checked < 100) {
    ScoredSet s = RandomSet(12, rng);
    auto sorted = s.scores;
    std::sort(sorted.begin(), sorted.end());
    double gap = 1.0;
    for (std::size_t i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
    if (gap < 0.01) continue;
    ++checked;
    const double mid = ap_approx_error(s, {0.01, 0.005});
    const double sharp = ap_approx_error(s, {0.001, 0.005});
    EXPECT_GE(mid, sharp);
    e1 += ap_approx_error(s, {0.1, 0.005});
    e2 += mid;
    e3 += sharp;
    EXPECT_LT(ap_approx_error(s, {1e-6, 0.005}), 1e-9);
  }
  EXPECT_GT(e1, e2);
  EXPECT_GT(e2, e3);
}

TEST(SmoothApLoss, MatchesSerialReference) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto b = RandomBatch(8, 4, 8, seed);
    for (double tau : {1.0, 0.05, 0.01}) {
      const auto fast = smooth_ap_loss(b, {tau, 0.005});
      const auto ref = reference::smooth_ap_loss(b, {tau, 0.005});
      EXPECT_NEAR(fast.loss, ref.loss, 1e-12);
      EXPECT_LT(oracle::scaled_max_error({fast.score_grad.flat().begin(), fast.score_grad.flat().end()},
                                         {ref.score_grad.flat().begin(), ref.score_grad.flat().end()}),
                1e-10);
      EXPECT_LT(oracle::scaled_max_error(
                    {fast.embedding_grad.flat().begin(), fast.embedding_grad.flat().end()},
                    {ref.embedding_grad.flat().begin(), ref.embedding_grad.flat().end()}),
                1e-10);
    }
  }
}

TEST(SmoothApLoss, LossIsMeanOfOneMinusQueryAp) {
  const auto b = RandomBatch(4, 3, 5, 9);
  const SmoothApConfig cfg{0.05, 0.005};
  double total = 0.0;
  for (std::size_t q = 0; q < b.size(); ++q) {
    ScoredSet s;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (j == q) continue;
      s.scores.push_back(Dot(b.vectors.row(q), b.vectors.row(j)));
      s.labels.push_back(b.class_ids[j] == b.class_ids[q]);
    }
    total += 1.0 - smooth_ap_query(s, cfg);
  }
  EXPECT_NEAR(smooth_ap_loss(b, cfg).loss, total / static_cast<double>(b.size()), 1e-14);
}

TEST(SmoothApLoss, ScoreGradientMatchesFiniteDifferences) {
  const auto b = RandomBatch(4, 4, 6, 31);
  const Matrix sim = similarity_matrix(b);
  for (double tau : {1.0, 0.1}) {
    const SmoothApConfig cfg{tau, 0.005};
    const auto analytic = smooth_ap_from_similarity(sim, b.class_ids, cfg);
    auto f = [&](const std::vector<double>& flat) {
      return smooth_ap_from_similarity(Matrix(sim.rows(), sim.cols(), flat), b.class_ids, cfg).loss;
    };
    const std::vector<double> x(sim.flat().begin(), sim.flat().end());
    const auto numeric = oracle::central_differences(f, x, 1e-6);
    const std::vector<double> a(analytic.score_grad.flat().begin(), analytic.score_grad.flat().end());
    EXPECT_LT(oracle::scaled_max_error(a, numeric), 1e-6) << "tau=" << tau;
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(analytic.score_grad(i, i), 0.0);
  }
}

TEST(SmoothApLoss, EmbeddingGradientMatchesFiniteDifferencesThroughNormalization) {
  const auto b = RandomBatch(4, 4, 8, 32);
  for (double tau : {1.0, 0.1}) {
    const SmoothApConfig cfg{tau, 0.005};
    const auto out = smooth_ap_loss(b, cfg);
    auto f = [&](const std::vector<double>& flat) {
      return smooth_ap_loss(EmbeddingBatch::normalized(Matrix(b.size(), b.dim(), flat), b.class_ids),
                            cfg)
          .loss;
    };
    const std::vector<double> x(b.vectors.flat().begin(), b.vectors.flat().end());
    const auto numeric = oracle::central_differences(f, x, 1e-6);
    const std::vector<double> a(out.embedding_grad.flat().begin(), out.embedding_grad.flat().end());
    EXPECT_LT(oracle::scaled_max_error(a, numeric), 1e-5) << "tau=" << tau;
  }
}

TEST(SmoothApLoss, EmbeddingGradientIsTangent) {
  const auto b = RandomBatch(5, 4, 7, 33);
  const auto out = smooth_ap_loss(b, {0.01, 0.005});
  for (std::size_t r = 0; r < b.size(); ++r) {
    EXPECT_NEAR(Dot(out.embedding_grad.row(r), b.vectors.row(r)), 0.0, 1e-12);
  }
  const Matrix chained = backprop_scores_to_embeddings(b, out.score_grad);
  EXPECT_EQ(chained, out.embedding_grad);
}

TEST(SmoothApLoss, NoiseFreeClustersGiveNearZeroGradient) {
  Matrix v(12, 4);
  for (std::size_t i = 0; i < 12; ++i) v(i, i / 3) = 1.0;
  std::vector<int> ids;
  for (int c = 0; c < 4; ++c) ids.insert(ids.end(), 3, c);
  const auto out = smooth_ap_loss(EmbeddingBatch{v, ids}, {1e-3, 0.005});
  EXPECT_LT(out.loss, 1e-12);
  for (double g : out.embedding_grad.flat()) EXPECT_LT(std::abs(g), 1e-12);
}

TEST(SmoothApLoss, SingletonClassRejected) {
  auto b = RandomBatch(3, 2, 4, 1);
  b.class_ids[0] = 42;
  EXPECT_THROW(smooth_ap_loss(b, {0.01, 0.005}), DegenerateInputError);
}

TEST(OperatingRegion, EqualScoresAllInside) {
  const std::vector<double> s(7, 0.3);
  EXPECT_DOUBLE_EQ(operating_region_fraction(DifferenceMatrix(s), {0.01, 0.005}), 1.0);
}

TEST(OperatingRegion, WidelySpacedScoresLeaveOnlyDiagonal) {
  const std::vector<double> s{0.0, 1.0, 2.5, 3.5, 5.0};
  EXPECT_DOUBLE_EQ(operating_region_fraction(DifferenceMatrix(s), {0.01, 0.005}), 1.0 / 5.0);
}

TEST(OperatingRegion, HalfWidthMatchesClosedFormRoot) {
  // Root of G(1 - G) / tau = threshold solved in closed form at high precision.
  EXPECT_NEAR(operating_region_half_width({0.01, 0.005}), 0.099033875450352946, 1e-9);
  const double w = operating_region_half_width({0.05, 0.01});
  EXPECT_NEAR(sigmoid_grad(w, 0.05), 0.01, 1e-9);
  EXPECT_EQ(operating_region_half_width({100.0, 0.005}), 0.0);
}

TEST(OperatingRegion, FractionAgreesWithHalfWidth) {
  std::mt19937_64 rng(40);
  const SmoothApConfig cfg{0.01, 0.005};
  const double w = operating_region_half_width(cfg);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = oracle::distinct_scores(30, rng);
    std::size_t inside = 0;
    for (double a : s) {
      for (double b : s) inside += std::abs(b - a) < w ? 1 : 0;
    }
    EXPECT_DOUBLE_EQ(operating_region_fraction(DifferenceMatrix(s), cfg),
                     static_cast<double>(inside) / 900.0);
  }
}

TEST(OperatingRegion, SingleInstanceBatchIsOne) {
  EmbeddingBatch b{Matrix(1, 2, std::vector<double>{1.0, 0.0}), {0}};
  EXPECT_DOUBLE_EQ(batch_region_fraction(b, {0.01, 0.005}), 1.0);
}

TEST(BatchApError, MeanOfQueryErrors) {
  const auto b = RandomBatch(4, 4, 6, 50);
  const SmoothApConfig cfg{0.1, 0.005};
  double total = 0.0;
  for (std::size_t q = 0; q < b.size(); ++q) {
    ScoredSet s;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (j == q) continue;
      s.scores.push_back(Dot(b.vectors.row(q), b.vectors.row(j)));
      s.labels.push_back(b.class_ids[j] == b.class_ids[q]);
    }
    total += std::abs(smooth_ap_query(s, cfg) - oracle::precision_at_hits(s.scores, s.labels));
  }
  EXPECT_NEAR(batch_ap_error(b, cfg), total / static_cast<double>(b.size()), 1e-14);
}

}  // namespace
}  // namespace ranksmooth
