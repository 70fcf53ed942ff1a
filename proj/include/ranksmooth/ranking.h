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

#ifndef RANKSMOOTH_RANKING_H_
#define RANKSMOOTH_RANKING_H_

// Exact (non-differentiable) retrieval metrics. Everything in the smooth
// relaxation is checked against the functions declared here.
//
// Ranking convention: instance j is ranked ahead of instance i when
// scores[j] > scores[i], or when the scores are equal and j < i. This makes
// every ranking proper (tie-free) and deterministic.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ranksmooth/matrix.h"

namespace ranksmooth {

// Raised when a query has no positives or a class has a single instance.
class DegenerateInputError : public std::invalid_argument {
 public:
  explicit DegenerateInputError(const std::string& what,
                                std::optional<int> class_id = std::nullopt)
      : std::invalid_argument(what), class_id_(class_id) {}
  std::optional<int> class_id() const { return class_id_; }

 private:
  std::optional<int> class_id_;
};

// Relevance scores for one query paired with positivity labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> labels;

  std::size_t size() const { return scores.size(); }
  std::size_t num_positives() const;
  // Throws std::invalid_argument on length mismatch or empty input.
  void validate() const;
};

// d(i, j) = scores[j] - scores[i].
class DifferenceMatrix {
 public:
  explicit DifferenceMatrix(std::span<const double> scores);

  std::size_t size() const { return d_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return d_(i, j); }
  const Matrix& matrix() const { return d_; }

 private:
  Matrix d_;
};

// L2-normalized embeddings (one per row) with class labels.
struct EmbeddingBatch {
  Matrix vectors;
  std::vector<int> class_ids;

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  // Checks row count against labels and every row norm against 1 +- 1e-9.
  void validate() const;

  // Normalizes each row of `raw`. Zero rows are rejected.
  static EmbeddingBatch normalized(Matrix raw, std::vector<int> class_ids);
};

inline bool ranked_ahead(std::span<const double> scores, std::size_t j, std::size_t i) {
  return scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
}

// Dot products of row `query` with every row, the query itself included.
std::vector<double> cosine_scores(std::size_t query, const EmbeddingBatch& batch);

// Full m x m cosine similarity matrix.
Matrix similarity_matrix(const EmbeddingBatch& batch);

// 1 + number of members of the masked subset ranked ahead of instance i.
double rank_in_set(std::size_t i, const std::vector<bool>& subset_mask,
                   const ScoredSet& scored);

// Average precision in its indicator-count form. Throws
// DegenerateInputError when there are no positives.
double exact_ap(const ScoredSet& scored);

struct EvalOptions {
  // Skip queries whose class has a single member instead of throwing.
  bool allow_degenerate = false;
};

// Per-query AP with every instance used as the query against all others.
std::vector<double> per_query_ap(const EmbeddingBatch& batch, EvalOptions opts = {});

// Mean of per_query_ap over non-skipped queries, reduced in index order.
double mean_ap(const EmbeddingBatch& batch, EvalOptions opts = {});

// Fraction of queries with at least one positive among their top-k
// neighbours (self excluded). Every k must satisfy 1 <= k < m.
std::map<int, double> recall_at_k(const EmbeddingBatch& batch, std::span<const int> ks);

// Throws DegenerateInputError naming the first class with one instance.
void require_no_singleton_classes(std::span<const int> class_ids);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_RANKING_H_
