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

#include "ranksmooth/ranking.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace ranksmooth {

std::size_t ScoredSet::num_positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

void ScoredSet::validate() const {
  if (scores.empty()) throw std::invalid_argument("ScoredSet: empty score vector");
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("ScoredSet: scores and labels differ in length");
  }
}

DifferenceMatrix::DifferenceMatrix(std::span<const double> scores)
    : d_(scores.size(), scores.size()) {
  const std::size_t m = scores.size();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) d_(i, j) = scores[j] - scores[i];
  }
}

void EmbeddingBatch::validate() const {
  if (vectors.rows() != class_ids.size()) {
    throw std::invalid_argument("EmbeddingBatch: row count differs from label count");
  }
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    const double n = Norm(vectors.row(r));
    if (!(std::abs(n - 1.0) <= 1e-9)) {
      throw std::invalid_argument("EmbeddingBatch: row " + std::to_string(r) +
                                  " is not unit norm");
    }
  }
}

EmbeddingBatch EmbeddingBatch::normalized(Matrix raw, std::vector<int> class_ids) {
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    auto row = raw.row(r);
    const double n = Norm(row);
    if (n == 0.0 || !std::isfinite(n)) {
      throw std::invalid_argument("cannot normalize row " + std::to_string(r) +
                                  ": zero or non-finite norm");
    }
    for (double& v : row) v /= n;
  }
  EmbeddingBatch batch{std::move(raw), std::move(class_ids)};
  if (batch.vectors.rows() != batch.class_ids.size()) {
    throw std::invalid_argument("EmbeddingBatch: row count differs from label count");
  }
  return batch;
}

std::vector<double> cosine_scores(std::size_t query, const EmbeddingBatch& batch) {
  if (query >= batch.size()) throw std::out_of_range("cosine_scores: query index out of range");
  std::vector<double> out(batch.size());
  const auto q = batch.vectors.row(query);
  for (std::size_t j = 0; j < batch.size(); ++j) out[j] = Dot(q, batch.vectors.row(j));
  return out;
}

Matrix similarity_matrix(const EmbeddingBatch& batch) {
  const auto m = static_cast<std::ptrdiff_t>(batch.size());
  Matrix sim(batch.size(), batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const auto vi = batch.vectors.row(i);
    for (std::ptrdiff_t j = i; j < m; ++j) {
      const double s = Dot(vi, batch.vectors.row(j));
      sim(i, j) = s;
      sim(j, i) = s;
    }
  }
  return sim;
}

double rank_in_set(std::size_t i, const std::vector<bool>& subset_mask,
                   const ScoredSet& scored) {
  scored.validate();
  if (i >= scored.size() || subset_mask.size() != scored.size()) {
    throw std::out_of_range("rank_in_set: index or mask size out of range");
  }
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scored.size(); ++j) {
    if (j != i && subset_mask[j] && ranked_ahead(scored.scores, j, i)) ++ahead;
  }
  return 1.0 + static_cast<double>(ahead);
}

namespace {

// AP of one query given scores over the retrieval set and a positivity
// predicate; `skip` removes one index (the query itself) from the set.
template <typename IsPositive>
double ap_counting(std::span<const double> scores, IsPositive is_positive,
                   std::size_t skip) {
  const std::size_t m = scores.size();
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == skip || !is_positive(i)) continue;
    ++positives;
    std::size_t ahead_pos = 0;
    std::size_t ahead_all = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || j == skip || !ranked_ahead(scores, j, i)) continue;
      ++ahead_all;
      if (is_positive(j)) ++ahead_pos;
    }
    total += (1.0 + static_cast<double>(ahead_pos)) / (1.0 + static_cast<double>(ahead_all));
  }
  return total / static_cast<double>(positives);
}

}  // namespace

double exact_ap(const ScoredSet& scored) {
  scored.validate();
  if (scored.num_positives() == 0) {
    throw DegenerateInputError("exact_ap: query has no positive instances");
  }
  return ap_counting(
      scored.scores, [&](std::size_t i) { return static_cast<bool>(scored.labels[i]); },
      std::numeric_limits<std::size_t>::max());
}

void require_no_singleton_classes(std::span<const int> class_ids) {
  std::map<int, std::size_t> counts;
  for (int c : class_ids) ++counts[c];
  for (const auto& [c, n] : counts) {
    if (n < 2) {
      throw DegenerateInputError(
          "class " + std::to_string(c) + " has a single instance; its query has no positives", c);
    }
  }
}

std::vector<double> per_query_ap(const EmbeddingBatch& batch, EvalOptions opts) {
  batch.validate();
  if (batch.size() < 2) throw std::invalid_argument("per_query_ap: need at least two instances");
  if (!opts.allow_degenerate) require_no_singleton_classes(batch.class_ids);

  const Matrix sim = similarity_matrix(batch);
  const auto m = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<double> ap(batch.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> class_size_of(batch.size());
  {
    std::unordered_map<int, std::size_t> counts;
    for (int c : batch.class_ids) ++counts[c];
    for (std::size_t i = 0; i < batch.size(); ++i) class_size_of[i] = counts[batch.class_ids[i]];
  }
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t k = 0; k < m; ++k) {
    if (class_size_of[k] < 2) continue;
    const int cls = batch.class_ids[k];
    ap[k] = ap_counting(
        sim.row(k), [&](std::size_t i) { return batch.class_ids[i] == cls; },
        static_cast<std::size_t>(k));
  }
  return ap;
}

double mean_ap(const EmbeddingBatch& batch, EvalOptions opts) {
  const std::vector<double> ap = per_query_ap(batch, opts);
  double total = 0.0;
  std::size_t used = 0;
  for (double v : ap) {
    if (std::isnan(v)) continue;
    total += v;
    ++used;
  }
  if (used < ap.size()) {
    std::clog << "warning: mean_ap skipped " << (ap.size() - used)
              << " queries from single-instance classes\n";
  }
  if (used == 0) throw DegenerateInputError("mean_ap: every query is degenerate");
  return total / static_cast<double>(used);
}

std::map<int, double> recall_at_k(const EmbeddingBatch& batch, std::span<const int> ks) {
  batch.validate();
  const std::size_t m = batch.size();
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) >= m) {
      throw std::invalid_argument("recall_at_k: k=" + std::to_string(k) +
                                  " must satisfy 1 <= k < m=" + std::to_string(m));
    }
  }
  const Matrix sim = similarity_matrix(batch);
  // Rank (1-based, self excluded) of the best-ranked positive; 0 if none.
  std::vector<std::size_t> first_hit(m, 0);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < mm; ++q) {
    const auto row = sim.row(q);
    const int cls = batch.class_ids[q];
    std::size_t best = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == static_cast<std::size_t>(q) || batch.class_ids[j] != cls) continue;
      if (best == m || ranked_ahead(row, j, best)) best = j;
    }
    if (best == m) continue;
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != static_cast<std::size_t>(q) && j != best && ranked_ahead(row, j, best)) ++ahead;
    }
    first_hit[q] = ahead + 1;
  }
  std::map<int, double> out;
  for (int k : ks) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < m; ++q) {
      if (first_hit[q] != 0 && first_hit[q] <= static_cast<std::size_t>(k)) ++hits;
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(m);
  }
  return out;
}

}  // namespace ranksmooth
