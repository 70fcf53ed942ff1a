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

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "ranksmooth/score_backprop.h"

namespace ranksmooth {

namespace {

inline double logistic(double x, double tau) {
  const double z = x / tau;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logistic_slope(double x, double tau) {
  const double e = std::exp(-std::abs(x) / tau);
  const double denom = 1.0 + e;
  return e / (denom * denom * tau);
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("sigmoid temperature must be positive and finite, got " +
                                std::to_string(tau));
  }
}

}  // namespace

void SmoothApConfig::validate() const {
  require_tau(tau);
  if (!(grad_threshold > 0.0) || !std::isfinite(grad_threshold)) {
    throw std::invalid_argument("grad_threshold must be positive and finite");
  }
}

double sigmoid(double x, double tau) {
  require_tau(tau);
  return logistic(x, tau);
}

double sigmoid_grad(double x, double tau) {
  require_tau(tau);
  return logistic_slope(x, tau);
}

double smooth_ap_query(const ScoredSet& scored, const SmoothApConfig& cfg) {
  cfg.validate();
  scored.validate();
  const std::size_t p = scored.num_positives();
  if (p == 0) throw DegenerateInputError("smooth_ap_query: query has no positive instances");

  const auto& s = scored.scores;
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!scored.labels[i]) continue;
    double pos = 1.0;
    double neg = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const double g = logistic(s[j] - s[i], cfg.tau);
      if (scored.labels[j]) {
        pos += g;
      } else {
        neg += g;
      }
    }
    total += pos / (pos + neg);
  }
  return total / static_cast<double>(p);
}

ScoreLoss smooth_ap_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                    const SmoothApConfig& cfg) {
  cfg.validate();
  const std::size_t m = sim.rows();
  if (sim.cols() != m || class_ids.size() != m) {
    throw std::invalid_argument("smooth_ap_from_similarity: shape mismatch");
  }
  if (m < 2) throw std::invalid_argument("smooth_ap_from_similarity: need at least two instances");
  require_no_singleton_classes(class_ids);

  ScoreLoss out{0.0, Matrix(m, m)};
  std::vector<double> query_loss(m, 0.0);
  const double inv_m = 1.0 / static_cast<double>(m);
  const auto mm = static_cast<std::ptrdiff_t>(m);

#pragma omp parallel
  {
    std::vector<double> sig(m);
    std::vector<double> slope(m);
    std::vector<std::size_t> positives;
    positives.reserve(m);

#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t kq = 0; kq < mm; ++kq) {
      const auto k = static_cast<std::size_t>(kq);
      const auto s = sim.row(k);
      auto grad = out.score_grad.row(k);
      const int cls = class_ids[k];

      positives.clear();
      for (std::size_t j = 0; j < m; ++j) {
        if (j != k && class_ids[j] == cls) positives.push_back(j);
      }
      const double scale = inv_m / static_cast<double>(positives.size());

      double ap = 0.0;
      for (std::size_t i : positives) {
        double pos = 1.0;
        double neg = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == k || j == i) continue;
          const double x = s[j] - s[i];
          sig[j] = logistic(x, cfg.tau);
          slope[j] = logistic_slope(x, cfg.tau);
          if (class_ids[j] == cls) {
            pos += sig[j];
          } else {
            neg += sig[j];
          }
        }
        const double total = pos + neg;
        ap += pos / total;

        // d(pos/total)/d pos and /d neg, negated and scaled for the loss.
        const double w_pos = -scale * neg / (total * total);
        const double w_neg = scale * pos / (total * total);
        double self = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (j == k || j == i) continue;
          const double w = (class_ids[j] == cls ? w_pos : w_neg) * slope[j];
          grad[j] += w;
          self -= w;
        }
        grad[i] += self;
      }
      query_loss[k] = 1.0 - ap / static_cast<double>(positives.size());
    }
  }

  double total = 0.0;
  for (double v : query_loss) total += v;
  out.loss = total * inv_m;
  return out;
}

LossOutput smooth_ap_loss(const EmbeddingBatch& batch, const SmoothApConfig& cfg) {
  batch.validate();
  const Matrix sim = similarity_matrix(batch);
  ScoreLoss sl = smooth_ap_from_similarity(sim, batch.class_ids, cfg);
  Matrix eg = backprop_scores_to_embeddings(batch, sl.score_grad);
  return {sl.loss, std::move(sl.score_grad), std::move(eg)};
}

double ap_approx_error(const ScoredSet& scored, const SmoothApConfig& cfg) {
  return std::abs(smooth_ap_query(scored, cfg) - exact_ap(scored));
}

double operating_region_fraction(const DifferenceMatrix& d, const SmoothApConfig& cfg) {
  cfg.validate();
  const std::size_t m = d.size();
  if (m == 0) throw std::invalid_argument("operating_region_fraction: empty matrix");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (std::abs(logistic_slope(d(i, j), cfg.tau)) > cfg.grad_threshold) ++inside;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(m * m);
}

double operating_region_half_width(const SmoothApConfig& cfg) {
  cfg.validate();
  if (logistic_slope(0.0, cfg.tau) <= cfg.grad_threshold) return 0.0;
  double lo = 0.0;
  double hi = cfg.tau;
  while (logistic_slope(hi, cfg.tau) > cfg.grad_threshold) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (logistic_slope(mid, cfg.tau) > cfg.grad_threshold) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double batch_ap_error(const EmbeddingBatch& batch, const SmoothApConfig& cfg) {
  batch.validate();
  cfg.validate();
  require_no_singleton_classes(batch.class_ids);
  const Matrix sim = similarity_matrix(batch);
  const std::size_t m = batch.size();
  std::vector<double> err(m);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t k = 0; k < mm; ++k) {
    ScoredSet q;
    q.scores.reserve(m - 1);
    q.labels.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == static_cast<std::size_t>(k)) continue;
      q.scores.push_back(sim(k, j));
      q.labels.push_back(batch.class_ids[j] == batch.class_ids[k]);
    }
    err[k] = ap_approx_error(q, cfg);
  }
  double total = 0.0;
  for (double e : err) total += e;
  return total / static_cast<double>(m);
}

double batch_region_fraction(const EmbeddingBatch& batch, const SmoothApConfig& cfg) {
  batch.validate();
  cfg.validate();
  const std::size_t m = batch.size();
  if (m == 0) throw std::invalid_argument("batch_region_fraction: empty batch");
  const Matrix sim = similarity_matrix(batch);
  std::vector<double> frac(m);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t k = 0; k < mm; ++k) {
    frac[k] = operating_region_fraction(DifferenceMatrix(sim.row(k)), cfg);
  }
  double total = 0.0;
  for (double f : frac) total += f;
  return total / static_cast<double>(m);
}

}  // namespace ranksmooth
