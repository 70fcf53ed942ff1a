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

#include "ranksmooth/score_backprop.h"

#include <cstddef>
#include <stdexcept>

namespace ranksmooth {

Matrix backprop_scores_to_embeddings(const EmbeddingBatch& batch, const Matrix& score_grad) {
  const std::size_t m = batch.size();
  const std::size_t d = batch.dim();
  if (score_grad.rows() != m || score_grad.cols() != m) {
    throw std::invalid_argument("backprop_scores_to_embeddings: score_grad must be m x m");
  }
  Matrix out(m, d);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < mm; ++r) {
    auto g = out.row(r);
    for (std::size_t j = 0; j < m; ++j) {
      const double w = score_grad(r, j) + score_grad(j, r);
      if (w == 0.0) continue;
      const auto ej = batch.vectors.row(j);
      for (std::size_t c = 0; c < d; ++c) g[c] += w * ej[c];
    }
    const auto er = batch.vectors.row(r);
    const double radial = Dot(g, er);
    for (std::size_t c = 0; c < d; ++c) g[c] -= radial * er[c];
  }
  return out;
}

}  // namespace ranksmooth
