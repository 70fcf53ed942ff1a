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

#ifndef RANKSMOOTH_SMOOTH_AP_H_
#define RANKSMOOTH_SMOOTH_AP_H_

// Sigmoid-relaxed average precision and its analytic gradient.
//
// For a query with retrieval-set scores s and positive set P, negative set N,
// each positive i contributes
//
//   (1 + sum_{j in P, j != i} G(s_j - s_i)) /
//   (1 + sum_{j in P, j != i} G(s_j - s_i) + sum_{j in N} G(s_j - s_i))
//
// with G(x) = 1 / (1 + exp(-x / tau)); the smoothed AP is the mean over P.
// The batch loss uses every instance as a query against all others and
// averages 1 - AP.
//
// Only the rows of the difference matrix that belong to positives enter the
// sum, so one query costs O(|P| m) and a class-balanced batch O(m^2 |P|).

#include <span>
#include <vector>

#include "ranksmooth/matrix.h"
#include "ranksmooth/ranking.h"

namespace ranksmooth {

struct SmoothApConfig {
  double tau = 0.01;
  // Sigmoid slope above which a difference counts as "in the operating region".
  double grad_threshold = 0.005;

  // Throws std::invalid_argument unless both values are finite and positive.
  void validate() const;
};

// Numerically stable logistic with temperature; saturates without overflow.
double sigmoid(double x, double tau);

// d/dx sigmoid(x, tau) = G (1 - G) / tau. Peak value 1 / (4 tau) at x = 0.
double sigmoid_grad(double x, double tau);

double smooth_ap_query(const ScoredSet& scored, const SmoothApConfig& cfg);

// Loss and its gradient with respect to the m x m cosine similarity matrix
// S (row = query). Diagonal entries of score_grad are zero.
struct ScoreLoss {
  double loss = 0.0;
  Matrix score_grad;
};

ScoreLoss smooth_ap_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                    const SmoothApConfig& cfg);

struct LossOutput {
  double loss = 0.0;
  Matrix score_grad;
  // Gradient with respect to the embedding rows, projected onto the tangent
  // space of the unit sphere. Equals the gradient with respect to
  // pre-normalization rows evaluated at unit norm.
  Matrix embedding_grad;
};

LossOutput smooth_ap_loss(const EmbeddingBatch& batch, const SmoothApConfig& cfg);

// |smooth_ap_query - exact_ap|.
double ap_approx_error(const ScoredSet& scored, const SmoothApConfig& cfg);

// Fraction of all m^2 entries (diagonal included) whose sigmoid slope
// exceeds cfg.grad_threshold.
double operating_region_fraction(const DifferenceMatrix& d, const SmoothApConfig& cfg);

// Positive x where sigmoid_grad(x, tau) == grad_threshold, found by
// bisection. Zero when the peak slope 1/(4 tau) does not exceed the threshold.
double operating_region_half_width(const SmoothApConfig& cfg);

// Per-batch mean over queries (self excluded) of ap_approx_error.
double batch_ap_error(const EmbeddingBatch& batch, const SmoothApConfig& cfg);

// Per-batch mean over queries of operating_region_fraction, using the
// query's full score row (self included) so the matrix is m x m.
double batch_region_fraction(const EmbeddingBatch& batch, const SmoothApConfig& cfg);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_SMOOTH_AP_H_
