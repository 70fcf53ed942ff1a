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

#include "ranksmooth/experiments.h"

#include <gtest/gtest.h>

#include <set>

namespace ranksmooth {
namespace {

Dataset SmallDataset() {
  return gen_synthetic_clusters({.num_classes = 12, .per_class = 8, .d_in = 10, .noise_sigma = 0.2,
                                 .signal_dim = 4, .seed = 1});
}

TrainConfig SmallConfig() {
  TrainConfig c;
  c.batch_size = 16;
  c.per_class = 4;
  c.steps = 25;
  c.eval_every = 10;
  c.lr = 1e-3;
  c.d_out = 6;
  c.test_fraction = 0.25;
  return c;
}

DataSplit SmallSplit(const TrainConfig& c) {
  return make_split(SmallDataset(), c.test_fraction, c.seed);
}

bool SameRecords(const std::vector<ExperimentRecord>& a, const std::vector<ExperimentRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (record_cells(a[i], false) != record_cells(b[i], false)) return false;
  }
  return true;
}

TEST(LossKind, ParseRoundTrip) {
  for (auto k : {LossKind::kSmoothAp, LossKind::kTriplet, LossKind::kContrastive}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_loss_kind("fastap"), std::invalid_argument);
  for (auto p : {AblationParam::kTau, AblationParam::kPerClass, AblationParam::kBatchSize}) {
    EXPECT_EQ(parse_ablation_param(to_string(p)), p);
  }
  EXPECT_THROW(parse_ablation_param("lr"), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.loss = LossKind::kTriplet;
  EXPECT_NO_THROW(c.validate());
  c = TrainConfig{};
  c.batch_size = 30;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(DeriveSeed, DistinctStreamsStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    for (std::uint64_t k = 0; k < 8; ++k) seen.insert(derive_seed(s, k));
  }
  EXPECT_EQ(seen.size(), 32u);
  EXPECT_EQ(derive_seed(3, 2), derive_seed(3, 2));
}

TEST(Records, Columns) {
  const auto cols = record_columns(false);
  EXPECT_EQ(cols.front(), "step");
  EXPECT_EQ(std::count(cols.begin(), cols.end(), "wall_ms"), 0);
  EXPECT_EQ(record_columns(true).back(), "wall_ms");
  EXPECT_EQ(record_cells({}, true).size(), record_columns(true).size());
}

TEST(ComputeLoss, DispatchesOnKind) {
  const auto split = SmallSplit(SmallConfig());
  const auto p = EncoderParams::init_uniform({10, 6, false, 0}, 0);
  std::vector<std::size_t> rows(16);
  std::iota(rows.begin(), rows.end(), 0);
  const Dataset sub = split.train.subset(rows);
  const auto batch = encode(sub.features, sub.class_ids, p);
  TrainConfig c = SmallConfig();
  EXPECT_EQ(compute_loss(batch, c).loss, smooth_ap_loss(batch, {c.tau, c.grad_threshold}).loss);
  c.loss = LossKind::kContrastive;
  EXPECT_EQ(compute_loss(batch, c).loss, contrastive_loss(batch, c.contrastive_margin).loss);
  c.loss = LossKind::kTriplet;
  EXPECT_EQ(compute_loss(batch, c).loss, triplet_loss(batch, {c.triplet_margin}).loss);
}

TEST(Train, RecordCadenceIncludesFinalStep) {
  TrainConfig c = SmallConfig();
  auto recs = train(SmallSplit(c), c).records;
  std::vector<std::size_t> steps;
  for (const auto& r : recs) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 10, 20, 25}));
  c.steps = 20;
  EXPECT_EQ(train(SmallSplit(c), c).records.size(), 3u);
  c.eval_every = 0;
  EXPECT_EQ(train(SmallSplit(c), c).records.size(), 2u);
}

TEST(Train, DeterministicPerSeed) {
  TrainConfig c = SmallConfig();
  const auto a = train(SmallSplit(c), c);
  const auto b = train(SmallSplit(c), c);
  EXPECT_TRUE(SameRecords(a.records, b.records));
  EXPECT_EQ(a.params, b.params);
  c.seed = 1;
  EXPECT_FALSE(SameRecords(a.records, train(SmallSplit(c), c).records));
}

TEST(Train, ObserverSeesEveryStep) {
  TrainConfig c = SmallConfig();
  std::size_t calls = 0, last = 0;
  train(SmallSplit(c), c, [&](std::size_t step, const EmbeddingBatch& b, double loss) {
    ++calls;
    last = step;
    EXPECT_EQ(b.size(), 16u);
    EXPECT_TRUE(std::isfinite(loss));
  });
  EXPECT_EQ(calls, 25u);
  EXPECT_EQ(last, 25u);
}

TEST(Train, LearnsOnSeparableData) {
  TrainConfig c = SmallConfig();
  c.steps = 300;
  c.eval_every = 0;
  const auto recs = train(SmallSplit(c), c).records;
  EXPECT_GT(recs.back().test_map, recs.front().test_map + 0.05);
  EXPECT_LT(recs.back().train_loss, recs.front().train_loss);
}

TEST(Evaluate, RawFeaturesOfCollapsedClustersArePerfect) {
  const Dataset ds = gen_synthetic_clusters({.num_classes = 5, .per_class = 4, .d_in = 6,
                                             .noise_sigma = 0.0, .signal_dim = 0});
  const std::vector<int> ks{1, 4, 16, 100};
  const auto r = evaluate_raw(ds, ks);
  EXPECT_DOUBLE_EQ(r.map, 1.0);
  EXPECT_DOUBLE_EQ(r.recall.at(1), 1.0);
  EXPECT_EQ(r.recall.count(100), 0u);
}

TEST(Ablate, OneRowPerValueIndependentOfJobs) {
  TrainConfig c = SmallConfig();
  const Dataset ds = SmallDataset();
  const std::vector<double> taus{0.1, 0.01, 0.001};
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto serial = ablate(ds, c, AblationParam::kTau, taus, seeds, 1);
  const auto parallel = ablate(ds, c, AblationParam::kTau, taus, seeds, 3);
  ASSERT_EQ(serial.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial[i].value, taus[i]);
    EXPECT_EQ(serial[i].final_map, parallel[i].final_map);
    EXPECT_EQ(serial[i].final_map.size(), 2u);
    EXPECT_DOUBLE_EQ(serial[i].mean_map, (serial[i].final_map[0] + serial[i].final_map[1]) / 2.0);
  }
}

TEST(Ablate, VariesOnlyTheChosenField) {
  TrainConfig c = SmallConfig();
  const Dataset ds = SmallDataset();
  const std::vector<std::uint64_t> seeds{3};
  const auto rows = ablate(ds, c, AblationParam::kBatchSize, std::vector<double>{16}, seeds, 1);
  c.seed = 3;
  const auto direct = train(make_split(ds, c.test_fraction, 3), c).records;
  EXPECT_EQ(rows[0].final_map[0], direct.back().test_map);
}

TEST(GradCheck, PassesForEveryLoss) {
  for (auto loss : {LossKind::kSmoothAp, LossKind::kTriplet, LossKind::kContrastive}) {
    GradCheckSpec spec;
    spec.loss = loss;
    spec.tolerance = loss == LossKind::kSmoothAp ? 1e-5 : 1e-6;
    const auto rep = grad_check(spec);
    EXPECT_TRUE(rep.pass) << to_string(loss) << " " << rep.embedding_rel_error << " "
                          << rep.param_rel_error;
    EXPECT_EQ(rep.coordinates, 16u * 8u + 12u * 8u);
  }
}

TEST(GradCheck, ClusteredBatchHasTinyGradient) {
  GradCheckSpec spec;
  spec.tau = 1e-3;
  spec.clustered = true;
  spec.tolerance = 1e-3;
  EXPECT_LT(grad_check(spec).max_abs_grad, 1e-8);
}

TEST(ApproxErrorSweep, OneRowPerTauPerStep) {
  TrainConfig c = SmallConfig();
  const std::vector<double> one{0.01};
  EXPECT_EQ(approx_error_sweep(SmallSplit(c), c, one, 7).size(), 7u);
  const std::vector<double> three{0.1, 0.01, 0.001};
  const auto rows = approx_error_sweep(SmallSplit(c), c, three, 5);
  ASSERT_EQ(rows.size(), 15u);
  for (const auto& r : rows) EXPECT_GE(r.ap_error, 0.0);
}

TEST(RegionSweep, DeterministicAndSingletonBatchIsOne) {
  const Dataset ds = SmallDataset();
  RegionSweepConfig cfg;
  cfg.per_class = 4;
  const std::vector<std::size_t> sizes{8, 16, 32};
  const auto a = operating_region_sweep(ds, sizes, cfg);
  const auto b = operating_region_sweep(ds, sizes, cfg);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].mean_fraction, b[i].mean_fraction);
    EXPECT_EQ(a[i].batches, ds.size() / sizes[i]);
  }
  const std::vector<std::size_t> one{1};
  EXPECT_DOUBLE_EQ(operating_region_sweep(ds, one, cfg)[0].mean_fraction, 1.0);
}

TEST(Timing, ReportsOrderedStatistics) {
  TimingConfig cfg;
  cfg.repeats = 3;
  cfg.warmups = 1;
  const std::vector<std::size_t> sizes{16, 32};
  const auto rows = loss_timing(sizes, cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GT(r.median_ms, 0.0);
    EXPECT_LE(r.min_ms, r.median_ms);
    EXPECT_LE(r.median_ms, r.max_ms);
  }
  const std::vector<std::size_t> bad{10};
  EXPECT_THROW(loss_timing(bad, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace ranksmooth
