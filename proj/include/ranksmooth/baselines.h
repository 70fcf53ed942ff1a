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

#ifndef RANKSMOOTH_BASELINES_H_
#define RANKSMOOTH_BASELINES_H_

// Distance-based ranking surrogates used as comparison points for Smooth-AP.
// Both work on cosine similarities and share the score-to-embedding
// backward pass with the smooth-AP loss.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ranksmooth/matrix.h"
#include "ranksmooth/ranking.h"
#include "ranksmooth/smooth_ap.h"

namespace ranksmooth {

enum class TripletMining {
  kAllValid,         // every (anchor, positive, negative) in the batch
  kRandomPerAnchor,  // one sampled positive and negative per anchor
};

struct TripletConfig {
  double margin = 0.1;
  TripletMining mining = TripletMining::kAllValid;
  // Only consulted by kRandomPerAnchor.
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean of max(s_an - s_ap + margin, 0) over the mined triples.
ScoreLoss triplet_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                  const TripletConfig& cfg);
LossOutput triplet_loss(const EmbeddingBatch& batch, const TripletConfig& cfg);

// Mean over positive pairs of (1 - s) plus mean over negative pairs of
// max(s - margin, 0), each over unordered pairs.
ScoreLoss contrastive_from_similarity(const Matrix& sim, std::span<const int> class_ids,
                                      double margin);
LossOutput contrastive_loss(const EmbeddingBatch& batch, double margin);

// A (negative, positive) index pair where the negative is ranked ahead.
struct ViolatingPair {
  std::size_t negative;
  std::size_t positive;
  bool operator==(const ViolatingPair&) const = default;
};

// All violating pairs, ordered by (negative, positive).
std::vector<ViolatingPair> violating_terms(const ScoredSet& scored);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_BASELINES_H_
