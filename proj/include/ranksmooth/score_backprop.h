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

#ifndef RANKSMOOTH_SCORE_BACKPROP_H_
#define RANKSMOOTH_SCORE_BACKPROP_H_

#include "ranksmooth/matrix.h"
#include "ranksmooth/ranking.h"

namespace ranksmooth {

// Chains dL/dS through S = E E^T and the per-row unit-norm constraint.
// Row r of the result is (I - e_r e_r^T) sum_j (G_rj + G_jr) e_j.
Matrix backprop_scores_to_embeddings(const EmbeddingBatch& batch, const Matrix& score_grad);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_SCORE_BACKPROP_H_
