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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <stdexcept>

#include "ranksmooth/csv_writer.h"

namespace ranksmooth {

namespace {

constexpr int kRecallKs[] = {1, 4, 16};
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct GatheredBatch {
  Matrix features;
  std::vector<int> class_ids;
};

GatheredBatch gather(const Dataset& ds, std::span<const std::size_t> rows) {
  GatheredBatch b{Matrix(rows.size(), ds.dim()), {}};
  b.class_ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::ranges::copy(ds.features.row(rows[r]), b.features.row(r).begin());
    b.class_ids.push_back(ds.class_ids[rows[r]]);
  }
  return b;
}

double lookup(const std::map<int, double>& m, int k) {
  const auto it = m.find(k);
  return it == m.end() ? kNaN : it->second;
}

EvalResult evaluate_batch(const EmbeddingBatch& batch, std::span<const int> ks) {
  EvalResult r;
  r.map = mean_ap(batch);
  std::vector<int> usable;
  for (int k : ks) {
    if (k >= 1 && static_cast<std::size_t>(k) < batch.size()) usable.push_back(k);
  }
  r.recall = recall_at_k(batch, usable);
  return r;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSmoothAp:
      return "smooth-ap";
    case LossKind::kTriplet:
      return "triplet";
    case LossKind::kContrastive:
      return "contrastive";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "smooth-ap") return LossKind::kSmoothAp;
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "contrastive") return LossKind::kContrastive;
  throw std::invalid_argument("unknown loss '" + name + "' (expected smooth-ap, triplet, contrastive)");
}

void TrainConfig::validate() const {
  if (loss == LossKind::kSmoothAp) SmoothApConfig{tau, grad_threshold}.validate();
  SamplerConfig{batch_size, per_class, seed}.validate();
  if (d_out == 0) throw std::invalid_argument("d_out must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  }
  TripletConfig{triplet_margin, triplet_mining, 0}.validate();
  if (!(contrastive_margin >= 0.0)) throw std::invalid_argument("contrastive margin must be >= 0");
}

std::vector<std::string> record_columns(bool with_wall_time) {
  std::vector<std::string> cols = {"step",        "train_loss",  "test_map",
                                   "recall_at_1", "recall_at_4", "recall_at_16",
                                   "ap_error",    "region_fraction"};
  if (with_wall_time) cols.push_back("wall_ms");
  return cols;
}

std::vector<std::string> record_cells(const ExperimentRecord& r, bool with_wall_time) {
  std::vector<std::string> cells = {std::to_string(r.step),       format_double(r.train_loss),
                                    format_double(r.test_map),    format_double(r.recall_at_1),
                                    format_double(r.recall_at_4), format_double(r.recall_at_16),
                                    format_double(r.ap_error),    format_double(r.region_fraction)};
  if (with_wall_time) cells.push_back(format_double(r.wall_ms));
  return cells;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

DataSplit make_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  auto [train, test] = split_by_class(ds, test_fraction, derive_seed(seed, 0));
  return {std::move(train), std::move(test)};
}

LossOutput compute_loss(const EmbeddingBatch& batch, const TrainConfig& cfg,
                        std::uint64_t step_seed) {
  switch (cfg.loss) {
    case LossKind::kSmoothAp:
      return smooth_ap_loss(batch, SmoothApConfig{cfg.tau, cfg.grad_threshold});
    case LossKind::kTriplet:
      return triplet_loss(batch, TripletConfig{cfg.triplet_margin, cfg.triplet_mining, step_seed});
    case LossKind::kContrastive:
      return contrastive_loss(batch, cfg.contrastive_margin);
  }
  throw std::logic_error("compute_loss: unhandled loss kind");
}

EvalResult evaluate(const Dataset& ds, const EncoderParams& params, std::span<const int> ks) {
  return evaluate_batch(encode(ds.features, ds.class_ids, params), ks);
}

EvalResult evaluate_raw(const Dataset& ds, std::span<const int> ks) {
  return evaluate_batch(EmbeddingBatch::normalized(ds.features, ds.class_ids), ks);
}

TrainResult train(const DataSplit& split, const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  if (split.test.size() < 2) throw std::invalid_argument("train: test split is empty");
  const auto t0 = Clock::now();

  const EncoderConfig enc{split.train.dim(), cfg.d_out, cfg.bias, cfg.hidden};
  EncoderParams params = EncoderParams::init_uniform(enc, derive_seed(cfg.seed, 1));
  AdamState adam = AdamState::zeros(params.num_params(), cfg.lr, cfg.weight_decay);
  const SamplerConfig sampler{cfg.batch_size, cfg.per_class, cfg.seed};
  const SmoothApConfig diag{cfg.tau > 0.0 ? cfg.tau : 0.01, cfg.grad_threshold};
  std::mt19937_64 rng(derive_seed(cfg.seed, 2));

  TrainResult result;
  auto record = [&](std::size_t step, const EmbeddingBatch& batch, double loss) {
    const EvalResult ev = evaluate(split.test, params, kRecallKs);
    ExperimentRecord r;
    r.step = step;
    r.train_loss = loss;
    r.test_map = ev.map;
    r.recall_at_1 = lookup(ev.recall, 1);
    r.recall_at_4 = lookup(ev.recall, 4);
    r.recall_at_16 = lookup(ev.recall, 16);
    r.ap_error = batch_ap_error(batch, diag);
    r.region_fraction = batch_region_fraction(batch, diag);
    r.wall_ms = ms_since(t0);
    result.records.push_back(r);
  };

  {
    // Step-0 diagnostics come from a probe batch on its own stream so the
    // training sequence does not depend on the evaluation cadence.
    const BatchDraw probe = next_batch(split.train, sampler, std::mt19937_64(derive_seed(cfg.seed, 3)));
    const GatheredBatch g = gather(split.train, probe.indices);
    const EmbeddingBatch e = encode(g.features, g.class_ids, params);
    record(0, e, compute_loss(e, cfg, derive_seed(cfg.seed, 4)).loss);
  }

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    BatchDraw draw = next_batch(split.train, sampler, std::move(rng));
    rng = draw.rng;
    const GatheredBatch g = gather(split.train, draw.indices);
    const EmbeddingBatch e = encode(g.features, g.class_ids, params);
    const LossOutput out = compute_loss(e, cfg, derive_seed(cfg.seed, 1000 + step));
    if (observer) observer(step, e, out.loss);

    const EncoderParams grads = encode_backward(g.features, params, out.embedding_grad);
    AdamUpdate upd = adam_step(params.flatten(), grads.flatten(), std::move(adam));
    params.assign(upd.params);
    adam = std::move(upd.state);

    const bool at_eval = (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
    if (at_eval) record(step, e, out.loss);
  }
  result.params = std::move(params);
  return result;
}

std::string to_string(AblationParam p) {
  switch (p) {
    case AblationParam::kTau:
      return "tau";
    case AblationParam::kPerClass:
      return "per-class";
    case AblationParam::kBatchSize:
      return "batch";
  }
  return "unknown";
}

AblationParam parse_ablation_param(const std::string& name) {
  if (name == "tau") return AblationParam::kTau;
  if (name == "per-class") return AblationParam::kPerClass;
  if (name == "batch") return AblationParam::kBatchSize;
  throw std::invalid_argument("unknown ablation parameter '" + name +
                              "' (expected tau, per-class, batch)");
}

std::vector<AblationRow> ablate(const Dataset& ds, const TrainConfig& base, AblationParam param,
                                std::span<const double> values,
                                std::span<const std::uint64_t> seeds, std::size_t jobs) {
  if (values.empty() || seeds.empty()) throw std::invalid_argument("ablate: empty grid");
  struct Point {
    std::size_t value_index;
    TrainConfig cfg;
  };
  std::vector<Point> points;
  for (std::size_t v = 0; v < values.size(); ++v) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      switch (param) {
        case AblationParam::kTau:
          cfg.tau = values[v];
          break;
        case AblationParam::kPerClass:
          cfg.per_class = static_cast<std::size_t>(std::llround(values[v]));
          break;
        case AblationParam::kBatchSize:
          cfg.batch_size = static_cast<std::size_t>(std::llround(values[v]));
          break;
      }
      cfg.validate();
      points.push_back({v, cfg});
    }
  }

  std::vector<ExperimentRecord> finals(points.size());
  auto run = [&](std::size_t i) {
    const DataSplit split = make_split(ds, points[i].cfg.test_fraction, points[i].cfg.seed);
    finals[i] = train(split, points[i].cfg).records.back();
  };
  const std::size_t workers = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < points.size(); start += workers) {
    std::vector<std::future<void>> wave;
    const std::size_t end = std::min(points.size(), start + workers);
    for (std::size_t i = start; i < end; ++i) {
      wave.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async, run, i));
    }
    for (auto& f : wave) f.get();
  }

  std::vector<AblationRow> rows(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    rows[v].param = to_string(param);
    rows[v].value = values[v];
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    AblationRow& row = rows[points[i].value_index];
    row.seeds.push_back(points[i].cfg.seed);
    row.final_map.push_back(finals[i].test_map);
    row.mean_map += finals[i].test_map;
    row.mean_recall_at_1 += finals[i].recall_at_1;
  }
  for (auto& row : rows) {
    row.mean_map /= static_cast<double>(row.seeds.size());
    row.mean_recall_at_1 /= static_cast<double>(row.seeds.size());
  }
  return rows;
}

GradCheckReport grad_check(const GradCheckSpec& spec) {
  if (spec.batch < 2 || spec.classes < 1 || spec.classes > spec.batch / 2) {
    throw std::invalid_argument("grad_check: need at least two instances per class");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix features(spec.batch, spec.d_in);
  std::vector<int> ids(spec.batch);
  Matrix means(spec.classes, spec.d_in);
  for (double& v : means.flat()) v = gauss(rng);
  for (std::size_t r = 0; r < spec.batch; ++r) {
    ids[r] = static_cast<int>(r % spec.classes);
    auto row = features.row(r);
    const auto mean = means.row(static_cast<std::size_t>(ids[r]));
    for (std::size_t c = 0; c < spec.d_in; ++c) row[c] = spec.clustered ? mean[c] : gauss(rng);
  }
  const EncoderParams params =
      EncoderParams::init_uniform({spec.d_in, spec.d_out, false, 0}, derive_seed(spec.seed, 1));

  TrainConfig lc;
  lc.loss = spec.loss;
  lc.tau = spec.tau;
  auto loss_of = [&](const EmbeddingBatch& b) { return compute_loss(b, lc).loss; };

  const EmbeddingBatch batch = encode(features, ids, params);
  const LossOutput out = compute_loss(batch, lc);
  const double h = spec.fd_step;

  auto rel_error = [](std::span<const double> a, std::span<const double> n, double& scale) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff = std::max(diff, std::abs(a[i] - n[i]));
      scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
    }
    return diff;
  };

  // Embedding coordinates: perturb, renormalize the row, re-evaluate.
  std::vector<double> numeric_e(batch.vectors.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (std::size_t c = 0; c < batch.dim(); ++c) {
      auto eval = [&](double delta) {
        Matrix v = batch.vectors;
        v(r, c) += delta;
        return loss_of(EmbeddingBatch::normalized(std::move(v), ids));
      };
      numeric_e[r * batch.dim() + c] = (eval(h) - eval(-h)) / (2.0 * h);
    }
  }

  const std::vector<double> analytic_p =
      encode_backward(features, params, out.embedding_grad).flatten();
  const std::vector<double> flat = params.flatten();
  std::vector<double> numeric_p(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto eval = [&](double delta) {
      EncoderParams p = params;
      std::vector<double> f = flat;
      f[i] += delta;
      p.assign(f);
      return loss_of(encode(features, ids, p));
    };
    numeric_p[i] = (eval(h) - eval(-h)) / (2.0 * h);
  }

  GradCheckReport rep;
  double scale_e = 0.0, scale_p = 0.0;
  const double diff_e = rel_error(out.embedding_grad.flat(), numeric_e, scale_e);
  const double diff_p = rel_error(analytic_p, numeric_p, scale_p);
  rep.embedding_rel_error = scale_e > 0.0 ? diff_e / scale_e : 0.0;
  rep.param_rel_error = scale_p > 0.0 ? diff_p / scale_p : 0.0;
  for (double g : out.embedding_grad.flat()) rep.max_abs_grad = std::max(rep.max_abs_grad, std::abs(g));
  rep.coordinates = numeric_e.size() + numeric_p.size();
  rep.pass = rep.embedding_rel_error < spec.tolerance && rep.param_rel_error < spec.tolerance;
  return rep;
}

std::vector<ApErrorRow> approx_error_sweep(const DataSplit& split, const TrainConfig& base,
                                           std::span<const double> taus, std::size_t steps) {
  std::vector<ApErrorRow> rows;
  for (double tau : taus) {
    TrainConfig cfg = base;
    cfg.loss = LossKind::kSmoothAp;
    cfg.tau = tau;
    cfg.steps = steps;
    cfg.eval_every = 0;
    const SmoothApConfig smooth{tau, cfg.grad_threshold};
    train(split, cfg, [&](std::size_t step, const EmbeddingBatch& batch, double) {
      rows.push_back({tau, step, batch_ap_error(batch, smooth)});
    });
  }
  return rows;
}

std::vector<RegionRow> operating_region_sweep(const Dataset& ds,
                                              std::span<const std::size_t> batch_sizes,
                                              const RegionSweepConfig& cfg) {
  cfg.smooth.validate();
  const EncoderParams params =
      EncoderParams::init_uniform({ds.dim(), cfg.d_out, false, 0}, derive_seed(cfg.seed, 1));
  std::vector<RegionRow> rows;
  for (std::size_t b : batch_sizes) {
    const SamplerConfig sampler{b, std::min(cfg.per_class, b), cfg.seed};
    std::mt19937_64 rng(derive_seed(cfg.seed, 20 + b));
    const std::size_t batches = std::max<std::size_t>(1, ds.size() / b);
    double total = 0.0;
    for (std::size_t i = 0; i < batches; ++i) {
      BatchDraw draw = next_batch(ds, sampler, std::move(rng));
      rng = draw.rng;
      const GatheredBatch g = gather(ds, draw.indices);
      total += batch_region_fraction(encode(g.features, g.class_ids, params), cfg.smooth);
    }
    rows.push_back({b, batches, total / static_cast<double>(batches)});
  }
  return rows;
}

std::vector<TimingRow> loss_timing(std::span<const std::size_t> batch_sizes,
                                   const TimingConfig& cfg) {
  if (cfg.repeats == 0) throw std::invalid_argument("loss_timing: repeats must be positive");
  const SmoothApConfig smooth{cfg.tau, 0.005};
  std::vector<TimingRow> rows;
  for (std::size_t m : batch_sizes) {
    if (m < 2 || cfg.per_class < 2 || m % cfg.per_class != 0) {
      throw std::invalid_argument("loss_timing: batch size must be a multiple of per_class >= 2");
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, m));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix raw(m, cfg.dim);
    for (double& v : raw.flat()) v = gauss(rng);
    std::vector<int> ids(m);
    for (std::size_t i = 0; i < m; ++i) ids[i] = static_cast<int>(i / cfg.per_class);
    const EmbeddingBatch batch = EmbeddingBatch::normalized(std::move(raw), std::move(ids));

    double sink = 0.0;
    for (std::size_t w = 0; w < cfg.warmups; ++w) sink += smooth_ap_loss(batch, smooth).loss;
    std::vector<double> times;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const auto t0 = Clock::now();
      sink += smooth_ap_loss(batch, smooth).loss;
      times.push_back(ms_since(t0));
    }
    if (!std::isfinite(sink)) throw std::runtime_error("loss_timing: non-finite loss");
    std::ranges::sort(times);
    rows.push_back({m, times[times.size() / 2], times.front(), times.back()});
  }
  return rows;
}

}  // namespace ranksmooth
