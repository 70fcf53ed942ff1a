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

#include "ranksmooth/baselines.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "ranksmooth/score_backprop.h"

namespace ranksmooth {

void TripletConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw std::invalid_argument("triplet margin must be nonnegative and finite");
  }
}

namespace {

struct Triple {
  std::size_t anchor, positive, negative;
};

void check_shapes(const Matrix& sim, std::span<const int> class_ids) {
  if (sim.rows() != sim.cols() || class_ids.size() != sim.rows()) {
    throw std::invalid_argument("similarity matrix and labels disagree in shape");
  }
  require_no_singleton_classes(class_ids);
}

std::vector<Triple> sample_triples(std::span<const int> class_ids, std::uint64_t seed) {
  const std::size_t m = class_ids.size();
  std::mt19937_64 rng(seed);
  std::vector<Triple> triples;
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < m; ++a) {
    pos.clear();
    neg.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == a) continue;
      (class_ids[j] == class_ids[a] ? pos : neg).push_back(j);
    }
    if (neg.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, neg.size() - 1);
    const std::size_t p = pos[pick_pos(rng)];
    const std::size_t n = neg[pick_neg(rng)];
    triples.push_back({a, p, n});
  }
  return triples;
}

}  // namespace

ScoreLoss triplet_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                  const TripletConfig& cfg) {
  cfg.validate();
  check_shapes(sim, class_ids);
  const std::size_t m = sim.rows();
  ScoreLoss out{0.0, Matrix(m, m)};

  if (cfg.mining == TripletMining::kRandomPerAnchor) {
    const auto triples = sample_triples(class_ids, cfg.seed);
    if (triples.empty()) return out;
    const double w = 1.0 / static_cast<double>(triples.size());
    double total = 0.0;
    for (const auto& t : triples) {
      const double h = sim(t.anchor, t.negative) - sim(t.anchor, t.positive) + cfg.margin;
      if (h > 0.0) {
        total += h;
        out.score_grad(t.anchor, t.negative) += w;
        out.score_grad(t.anchor, t.positive) -= w;
      }
    }
    out.loss = total * w;
    return out;
  }

  std::size_t count = 0;
  {
    std::map<int, std::size_t> sizes;
    for (int c : class_ids) ++sizes[c];
    for (int c : class_ids) count += (sizes[c] - 1) * (m - sizes[c]);
  }
  if (count == 0) return out;
  const double w = 1.0 / static_cast<double>(count);

  std::vector<double> anchor_sum(m, 0.0);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t aq = 0; aq < mm; ++aq) {
    const auto a = static_cast<std::size_t>(aq);
    auto grad = out.score_grad.row(a);
    double sum = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      if (p == a || class_ids[p] != class_ids[a]) continue;
      for (std::size_t n = 0; n < m; ++n) {
        if (class_ids[n] == class_ids[a]) continue;
        const double h = sim(a, n) - sim(a, p) + cfg.margin;
        if (h > 0.0) {
          sum += h;
          grad[n] += w;
          grad[p] -= w;
        }
      }
    }
    anchor_sum[a] = sum;
  }
  double total = 0.0;
  for (double s : anchor_sum) total += s;
  out.loss = total * w;
  return out;
}

LossOutput triplet_loss(const EmbeddingBatch& batch, const TripletConfig& cfg) {
  batch.validate();
  const Matrix sim = similarity_matrix(batch);
  ScoreLoss sl = triplet_from_similarity(sim, batch.class_ids, cfg);
  Matrix eg = backprop_scores_to_embeddings(batch, sl.score_grad);
  return {sl.loss, std::move(sl.score_grad), std::move(eg)};
}

ScoreLoss contrastive_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                      double margin) {
  if (!std::isfinite(margin) || margin < 0.0) {
    throw std::invalid_argument("contrastive margin must be nonnegative and finite");
  }
  check_shapes(sim, class_ids);
  const std::size_t m = sim.rows();
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      (class_ids[i] == class_ids[j] ? n_pos : n_neg)++;
    }
  }
  ScoreLoss out{0.0, Matrix(m, m)};
  const double w_pos = n_pos ? 1.0 / static_cast<double>(n_pos) : 0.0;
  const double w_neg = n_neg ? 1.0 / static_cast<double>(n_neg) : 0.0;
  double pos_total = 0.0;
  double neg_total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double s = sim(i, j);
      if (class_ids[i] == class_ids[j]) {
        pos_total += 1.0 - s;
        out.score_grad(i, j) -= w_pos;
      } else if (s - margin > 0.0) {
        neg_total += s - margin;
        out.score_grad(i, j) += w_neg;
      }
    }
  }
  out.loss = pos_total * w_pos + neg_total * w_neg;
  return out;
}

LossOutput contrastive_loss(const EmbeddingBatch& batch, double margin) {
  batch.validate();
  const Matrix sim = similarity_matrix(batch);
  ScoreLoss sl = contrastive_from_similarity(sim, batch.class_ids, margin);
  Matrix eg = backprop_scores_to_embeddings(batch, sl.score_grad);
  return {sl.loss, std::move(sl.score_grad), std::move(eg)};
}

std::vector<ViolatingPair> violating_terms(const ScoredSet& scored) {
  scored.validate();
  std::vector<ViolatingPair> out;
  for (std::size_t n = 0; n < scored.size(); ++n) {
    if (scored.labels[n]) continue;
    for (std::size_t p = 0; p < scored.size(); ++p) {
      if (scored.labels[p] && ranked_ahead(scored.scores, n, p)) out.push_back({n, p});
    }
  }
  return out;
}

}  // namespace ranksmooth
