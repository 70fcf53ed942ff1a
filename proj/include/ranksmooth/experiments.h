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

#ifndef RANKSMOOTH_EXPERIMENTS_H_
#define RANKSMOOTH_EXPERIMENTS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ranksmooth/baselines.h"
#include "ranksmooth/data.h"
#include "ranksmooth/encoder.h"
#include "ranksmooth/ranking.h"
#include "ranksmooth/smooth_ap.h"

namespace ranksmooth {

enum class LossKind { kSmoothAp, kTriplet, kContrastive };

std::string to_string(LossKind kind);
// Accepts "smooth-ap", "triplet", "contrastive".
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  LossKind loss = LossKind::kSmoothAp;
  double tau = 0.01;
  double grad_threshold = 0.005;
  std::size_t batch_size = 64;
  std::size_t per_class = 4;
  std::size_t steps = 2000;
  std::size_t eval_every = 200;  // 0: evaluate only at step 0 and the end
  double lr = 1e-5;
  double weight_decay = 4e-5;
  std::uint64_t seed = 0;
  std::size_t d_out = 16;
  std::size_t hidden = 0;
  bool bias = false;
  double test_fraction = 0.3;
  double triplet_margin = 0.1;
  TripletMining triplet_mining = TripletMining::kAllValid;
  double contrastive_margin = 0.5;

  void validate() const;
};

struct ExperimentRecord {
  std::size_t step = 0;
  double train_loss = 0.0;
  double test_map = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_4 = 0.0;
  double recall_at_16 = 0.0;
  double ap_error = 0.0;         // per-batch mean over queries
  double region_fraction = 0.0;  // per-batch mean over queries
  double wall_ms = 0.0;
};

// Column names of ExperimentRecord in CSV order; wall_ms is last.
std::vector<std::string> record_columns(bool with_wall_time);
std::vector<std::string> record_cells(const ExperimentRecord& r, bool with_wall_time);

struct DataSplit {
  Dataset train;
  Dataset test;
};

// Class-disjoint split keyed by the run seed.
DataSplit make_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

// Loss on one batch, dispatched on cfg.loss.
LossOutput compute_loss(const EmbeddingBatch& batch, const TrainConfig& cfg,
                        std::uint64_t step_seed = 0);

struct EvalResult {
  double map = 0.0;
  std::map<int, double> recall;
};

// mAP and Recall@K over `ds` embedded with `params`. Recall ks at or above
// the dataset size are left out.
EvalResult evaluate(const Dataset& ds, const EncoderParams& params, std::span<const int> ks);
// Same, on raw features normalized per row.
EvalResult evaluate_raw(const Dataset& ds, std::span<const int> ks);

struct TrainResult {
  std::vector<ExperimentRecord> records;
  EncoderParams params;
};

// Called once per optimization step with the step number (1-based), the
// embedded batch before the update, and its loss.
using StepObserver = std::function<void(std::size_t, const EmbeddingBatch&, double)>;

TrainResult train(const DataSplit& split, const TrainConfig& cfg,
                  const StepObserver& observer = {});

enum class AblationParam { kTau, kPerClass, kBatchSize };
std::string to_string(AblationParam p);
AblationParam parse_ablation_param(const std::string& name);  // "tau", "per-class", "batch"

struct AblationRow {
  std::string param;
  double value = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_map;  // one per seed
  double mean_map = 0.0;
  double mean_recall_at_1 = 0.0;
};

// One training run per (value, seed); each run differs from `base` in the
// ablated field and the seed only.
std::vector<AblationRow> ablate(const Dataset& ds, const TrainConfig& base, AblationParam param,
                                std::span<const double> values,
                                std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

struct GradCheckSpec {
  LossKind loss = LossKind::kSmoothAp;
  std::size_t batch = 16;
  std::size_t classes = 4;
  std::size_t d_in = 12;
  std::size_t d_out = 8;
  double tau = 1.0;
  double fd_step = 1e-6;
  double tolerance = 1e-5;
  // Features equal their class mean exactly (no noise).
  bool clustered = false;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  // max |analytic - numeric| / max(|analytic|, |numeric|) over all coordinates
  double embedding_rel_error = 0.0;
  double param_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t coordinates = 0;
  bool pass = false;
};

GradCheckReport grad_check(const GradCheckSpec& spec);

struct ApErrorRow {
  double tau = 0.0;
  std::size_t step = 0;
  double ap_error = 0.0;
};

// For each tau, trains smooth-AP for `steps` steps from the same start and
// logs the per-batch AP approximation error at every step.
std::vector<ApErrorRow> approx_error_sweep(const DataSplit& split, const TrainConfig& base,
                                           std::span<const double> taus, std::size_t steps);

struct RegionRow {
  std::size_t batch_size = 0;
  std::size_t batches = 0;
  double mean_fraction = 0.0;
};

struct RegionSweepConfig {
  std::size_t per_class = 8;
  std::size_t d_out = 16;
  SmoothApConfig smooth;
  std::uint64_t seed = 0;
};

// Fixed untrained encoder; one epoch (max(1, N / B) batches) per batch size.
std::vector<RegionRow> operating_region_sweep(const Dataset& ds,
                                              std::span<const std::size_t> batch_sizes,
                                              const RegionSweepConfig& cfg);

struct TimingRow {
  std::size_t batch_size = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

struct TimingConfig {
  std::size_t per_class = 4;
  std::size_t dim = 16;
  std::size_t warmups = 2;
  std::size_t repeats = 7;
  double tau = 0.01;
  std::uint64_t seed = 0;
};

// Median wall time of smooth_ap_loss (forward and backward) per batch size.
std::vector<TimingRow> loss_timing(std::span<const std::size_t> batch_sizes,
                                   const TimingConfig& cfg);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_EXPERIMENTS_H_
