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

#ifndef RANKSMOOTH_REFERENCE_H_
#define RANKSMOOTH_REFERENCE_H_

// Serial, literal implementations kept for testing and benchmarking. They
// build the full difference matrix for every query (O(m^3) per batch) and
// take ranks straight from rank_in_set. Slow, but easy to audit.

#include "ranksmooth/matrix.h"
#include "ranksmooth/ranking.h"
#include "ranksmooth/smooth_ap.h"

namespace ranksmooth::reference {

Matrix similarity_matrix(const EmbeddingBatch& batch);

// (1/|P|) sum_{i in P} R(i, P) / R(i, all).
double exact_ap(const ScoredSet& scored);
double mean_ap(const EmbeddingBatch& batch);

ScoreLoss smooth_ap_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                    const SmoothApConfig& cfg);
LossOutput smooth_ap_loss(const EmbeddingBatch& batch, const SmoothApConfig& cfg);

}  // namespace ranksmooth::reference

#endif  // RANKSMOOTH_REFERENCE_H_
