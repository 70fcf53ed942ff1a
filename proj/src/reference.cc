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

#include "ranksmooth/reference.h"

#include <stdexcept>

namespace ranksmooth::reference {

Matrix similarity_matrix(const EmbeddingBatch& batch) {
  const std::size_t m = batch.size();
  Matrix sim(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) sim(i, j) = Dot(batch.vectors.row(i), batch.vectors.row(j));
  }
  return sim;
}

double exact_ap(const ScoredSet& scored) {
  scored.validate();
  const std::size_t p = scored.num_positives();
  if (p == 0) throw DegenerateInputError("reference::exact_ap: no positives");
  const std::vector<bool> all(scored.size(), true);
  double total = 0.0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!scored.labels[i]) continue;
    total += rank_in_set(i, scored.labels, scored) / rank_in_set(i, all, scored);
  }
  return total / static_cast<double>(p);
}

double mean_ap(const EmbeddingBatch& batch) {
  batch.validate();
  require_no_singleton_classes(batch.class_ids);
  const std::size_t m = batch.size();
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    ScoredSet q;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == k) continue;
      q.scores.push_back(Dot(batch.vectors.row(k), batch.vectors.row(j)));
      q.labels.push_back(batch.class_ids[j] == batch.class_ids[k]);
    }
    total += reference::exact_ap(q);
  }
  return total / static_cast<double>(m);
}

ScoreLoss smooth_ap_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                    const SmoothApConfig& cfg) {
  cfg.validate();
  const std::size_t m = sim.rows();
  if (sim.cols() != m || class_ids.size() != m) {
    throw std::invalid_argument("reference::smooth_ap_from_similarity: shape mismatch");
  }
  require_no_singleton_classes(class_ids);

  ScoreLoss out{0.0, Matrix(m, m)};
  double loss = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    // Retrieval set: every instance except the query.
    std::vector<std::size_t> idx;
    std::vector<double> t;
    std::vector<double> pos;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == k) continue;
      idx.push_back(j);
      t.push_back(sim(k, j));
      pos.push_back(class_ids[j] == class_ids[k] ? 1.0 : 0.0);
    }
    const std::size_t n = t.size();
    double n_pos = 0.0;
    for (double p : pos) n_pos += p;

    const DifferenceMatrix d(t);
    Matrix sig(n, n), slope(n, n);
    std::vector<double> r_all(n, 1.0), r_pos(n, 1.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b) continue;  // (1 - I) mask
        sig(a, b) = sigmoid(d(a, b), cfg.tau);
        slope(a, b) = sigmoid_grad(d(a, b), cfg.tau);
        r_all[a] += sig(a, b);
        r_pos[a] += sig(a, b) * pos[b];
      }
    }
    double ap = 0.0;
    for (std::size_t a = 0; a < n; ++a) ap += pos[a] * r_pos[a] / r_all[a];
    ap /= n_pos;
    loss += 1.0 - ap;

    // dL/dt via dAP/dG(a,b) and D(a,b) = t_b - t_a.
    std::vector<double> dt(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      if (pos[a] == 0.0) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (a == b) continue;
        const double dap_dg = (pos[b] / r_all[a] - r_pos[a] / (r_all[a] * r_all[a])) / n_pos;
        const double dl_dd = -dap_dg * slope(a, b) / static_cast<double>(m);
        dt[b] += dl_dd;
        dt[a] -= dl_dd;
      }
    }
    for (std::size_t a = 0; a < n; ++a) out.score_grad(k, idx[a]) = dt[a];
  }
  out.loss = loss / static_cast<double>(m);
  return out;
}

LossOutput smooth_ap_loss(const EmbeddingBatch& batch, const SmoothApConfig& cfg) {
  batch.validate();
  const Matrix sim = reference::similarity_matrix(batch);
  ScoreLoss sl = reference::smooth_ap_from_similarity(sim, batch.class_ids, cfg);
  const std::size_t m = batch.size(), dim = batch.dim();
  Matrix eg(m, dim);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const double w = sl.score_grad(r, j) + sl.score_grad(j, r);
      for (std::size_t c = 0; c < dim; ++c) eg(r, c) += w * batch.vectors(j, c);
    }
    double radial = 0.0;
    for (std::size_t c = 0; c < dim; ++c) radial += eg(r, c) * batch.vectors(r, c);
    for (std::size_t c = 0; c < dim; ++c) eg(r, c) -= radial * batch.vectors(r, c);
  }
  return {sl.loss, std::move(sl.score_grad), std::move(eg)};
}

}  // namespace ranksmooth::reference
