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

#include "cli_app.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "ranksmooth/csv_writer.h"
#include "ranksmooth/data.h"
#include "ranksmooth/experiments.h"
#include "ranksmooth/svg_plot.h"

#ifndef RANKSMOOTH_GIT_DESCRIBE
#define RANKSMOOTH_GIT_DESCRIBE "unknown"
#endif

namespace ranksmooth::cli {

namespace fs = std::filesystem;

namespace {

// Bad flags, bad config values, unreadable inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run that completed but did not meet its own pass criterion.
class DiagnosticFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
  bool is_flag = false;
};

std::vector<KeySpec> train_keys() {
  return {
      {"data", "", "dataset CSV (id,class_id,features...)"},
      {"min-instances", "2", "drop classes with fewer rows than this"},
      {"loss", "smooth-ap", "smooth-ap | triplet | contrastive"},
      {"tau", "0.01", "sigmoid temperature"},
      {"threshold", "0.005", "sigmoid-slope threshold for the operating region"},
      {"batch", "64", "mini-batch size"},
      {"per-class", "4", "instances per class in a batch"},
      {"steps", "2000", "optimization steps"},
      {"eval-every", "200", "evaluation cadence in steps (0: start and end only)"},
      {"lr", "1e-5", "Adam learning rate"},
      {"weight-decay", "4e-5", "L2 weight decay"},
      {"seed", "0", "run seed (falls back to RANK_SMOOTH_SEED)"},
      {"d-out", "16", "embedding dimension"},
      {"hidden", "0", "hidden tanh layer width (0: linear encoder)"},
      {"bias", "false", "use bias terms", true},
      {"test-fraction", "0.3", "fraction of classes held out for testing"},
      {"margin", "0.1", "triplet margin"},
      {"mining", "all", "triplet mining: all | random"},
      {"contrastive-margin", "0.5", "contrastive negative margin"},
      {"wall-time", "false", "add a wall_ms column to metrics.csv", true},
  };
}

std::vector<KeySpec> keys_for(const std::string& command) {
  if (command == "gen-data") {
    return {
        {"classes", "50", "number of classes"},
        {"per-class", "20", "instances per class"},
        {"dim", "64", "feature dimension"},
        {"noise", "0.35", "per-coordinate Gaussian noise sigma"},
        {"signal-dim", "8", "dimension of the class-mean subspace (0: full)"},
        {"seed", "7", "generator seed (falls back to RANK_SMOOTH_SEED)"},
    };
  }
  if (command == "train") return train_keys();
  if (command == "eval") {
    return {
        {"data", "", "dataset CSV"},
        {"min-instances", "2", "drop classes with fewer rows than this"},
        {"checkpoint", "", "encoder checkpoint; empty evaluates raw features"},
        {"split", "all", "all | test (the held-out classes of a train run)"},
        {"test-fraction", "0.3", "held-out class fraction when --split test"},
        {"seed", "0", "run seed used for the split"},
        {"ks", "1,4,16", "Recall@K cut-offs"},
    };
  }
  if (command == "ablate") {
    auto keys = train_keys();
    keys.push_back({"param", "", "tau | per-class | batch"});
    keys.push_back({"values", "", "comma-separated values of the ablated parameter"});
    keys.push_back({"seeds", "0,1,2", "comma-separated seeds averaged per value"});
    keys.push_back({"jobs", "1", "parallel training runs"});
    return keys;
  }
  if (command == "grad-check") {
    return {
        {"loss", "smooth-ap", "smooth-ap | triplet | contrastive"},
        {"tau", "1.0", "sigmoid temperature"},
        {"batch", "16", "batch size"},
        {"classes", "4", "classes in the batch"},
        {"d-in", "12", "feature dimension"},
        {"d-out", "8", "embedding dimension"},
        {"fd-step", "1e-6", "central-difference step"},
        {"tolerance", "", "max relative error (default depends on loss and tau)"},
        {"trials", "20", "random batches to check"},
        {"clustered", "false", "noise-free features at the class means", true},
        {"seed", "0", "seed (falls back to RANK_SMOOTH_SEED)"},
    };
  }
  if (command == "approx-error") {
    auto keys = train_keys();
    keys.push_back({"taus", "0.1,0.01,0.001", "temperatures to compare"});
    for (auto& k : keys) {
      if (k.name == "steps") k.default_value = "200";
    }
    return keys;
  }
  if (command == "region-sweep") {
    return {
        {"data", "", "dataset CSV"},
        {"min-instances", "2", "drop classes with fewer rows than this"},
        {"batches", "32,64,128,256", "batch sizes"},
        {"per-class", "8", "instances per class in a batch"},
        {"d-out", "16", "embedding dimension"},
        {"tau", "0.01", "sigmoid temperature"},
        {"threshold", "0.005", "sigmoid-slope threshold"},
        {"seed", "0", "seed (falls back to RANK_SMOOTH_SEED)"},
    };
  }
  if (command == "timing") {
    return {
        {"batches", "64,128,256,512", "batch sizes"},
        {"per-class", "4", "instances per class"},
        {"dim", "16", "embedding dimension"},
        {"tau", "0.01", "sigmoid temperature"},
        {"warmups", "2", "untimed warm-up calls"},
        {"repeats", "7", "timed calls; the median is reported"},
        {"seed", "0", "seed (falls back to RANK_SMOOTH_SEED)"},
    };
  }
  throw std::logic_error("unknown command " + command);
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Resolved key=value configuration with typed accessors.
class Config {
 public:
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw std::logic_error("unregistered key " + key);
    return it->second;
  }

  std::string required(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty()) throw UsageError("missing required --" + key);
    return v;
  }

  double real(const std::string& key) const { return parse_real(key, str(key)); }

  std::size_t count(const std::string& key) const {
    return static_cast<std::size_t>(parse_u64(key, str(key)));
  }

  std::uint64_t u64(const std::string& key) const { return parse_u64(key, str(key)); }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("--" + key + ": expected true or false, got '" + v + "'");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(key)) out.push_back(parse_real(key, item));
    return out;
  }

  std::vector<std::uint64_t> u64s(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(key)) out.push_back(parse_u64(key, item));
    return out;
  }

 private:
  std::vector<std::string> split(const std::string& key) const {
    std::vector<std::string> items;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) throw UsageError("--" + key + ": empty list element");
      items.push_back(item);
    }
    if (items.empty()) throw UsageError("--" + key + ": expected a comma-separated list");
    return items;
  }

  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw UsageError("--" + key + ": '" + s + "' is not a finite number");
    }
    return v;
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw UsageError("--" + key + ": '" + s + "' is not a non-negative integer");
    }
    return v;
  }
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(fs::path path, const std::string& command, const Config& cfg) : path_(std::move(path)) {
    doc_["command"] = command;
    doc_["config"] = cfg.values;
    doc_["seed"] = cfg.values.count("seed") ? cfg.u64("seed") : 0;
    doc_["git_describe"] = RANKSMOOTH_GIT_DESCRIBE;
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
    doc_["status"] = "running";
    doc_["outputs"] = nlohmann::json::array();
    write();
  }

  void add_output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }

  void finish(const std::string& status) {
    doc_["finished_at"] = utc_now();
    doc_["status"] = status;
    write();
  }

 private:
  void write() const {
    std::ofstream os(path_, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write manifest " + path_.string());
    os << doc_.dump(2) << '\n';
  }

  fs::path path_;
  nlohmann::json doc_;
};

struct RunContext {
  Config cfg;
  fs::path out;
  bool plot = false;
  std::ostream* log = nullptr;
};

Dataset load_dataset(const Config& cfg) {
  try {
    return load_features_csv(cfg.required("data"), cfg.count("min-instances"));
  } catch (const CsvError& e) {
    throw UsageError(e.what());
  }
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  try {
    t.loss = parse_loss_kind(c.str("loss"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  t.tau = c.real("tau");
  t.grad_threshold = c.real("threshold");
  t.batch_size = c.count("batch");
  t.per_class = c.count("per-class");
  t.steps = c.count("steps");
  t.eval_every = c.count("eval-every");
  t.lr = c.real("lr");
  t.weight_decay = c.real("weight-decay");
  t.seed = c.u64("seed");
  t.d_out = c.count("d-out");
  t.hidden = c.count("hidden");
  t.bias = c.flag("bias");
  t.test_fraction = c.real("test-fraction");
  t.triplet_margin = c.real("margin");
  const auto& mining = c.str("mining");
  if (mining == "all") {
    t.triplet_mining = TripletMining::kAllValid;
  } else if (mining == "random") {
    t.triplet_mining = TripletMining::kRandomPerAnchor;
  } else {
    throw UsageError("--mining: expected all or random, got '" + mining + "'");
  }
  t.contrastive_margin = c.real("contrastive-margin");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return t;
}

void cmd_gen_data(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  SyntheticSpec spec;
  spec.num_classes = c.count("classes");
  spec.per_class = c.count("per-class");
  spec.d_in = c.count("dim");
  spec.noise_sigma = c.real("noise");
  spec.signal_dim = c.count("signal-dim");
  spec.seed = c.u64("seed");
  Dataset ds;
  try {
    ds = gen_synthetic_clusters(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  save_features_csv(ds, ctx.out);
  manifest.add_output(ctx.out);
  *ctx.log << "wrote " << ds.size() << " rows (" << ds.num_classes() << " classes, dim " << ds.dim()
           << ") to " << ctx.out.string() << '\n';
}

void plot_records(const fs::path& dir, const std::vector<ExperimentRecord>& recs, Manifest& m) {
  std::vector<double> x;
  for (const auto& r : recs) x.push_back(static_cast<double>(r.step));
  auto series = [&](const std::string& name, double ExperimentRecord::*field) {
    PlotSeries s{name, x, {}};
    for (const auto& r : recs) s.y.push_back(r.*field);
    return s;
  };
  auto emit = [&](const std::string& file, const std::string& title, std::vector<PlotSeries> s) {
    const fs::path p = dir / file;
    write_line_plot(p, title, "step", title, s);
    m.add_output(p);
  };
  emit("train_loss.svg", "train loss", {series("train_loss", &ExperimentRecord::train_loss)});
  emit("test_map.svg", "test mAP", {series("test_map", &ExperimentRecord::test_map)});
  emit("recall.svg", "test Recall@K",
       {series("R@1", &ExperimentRecord::recall_at_1), series("R@4", &ExperimentRecord::recall_at_4),
        series("R@16", &ExperimentRecord::recall_at_16)});
  emit("ap_error.svg", "AP approximation error", {series("ap_error", &ExperimentRecord::ap_error)});
  emit("region_fraction.svg", "operating-region fraction",
       {series("region_fraction", &ExperimentRecord::region_fraction)});
}

void cmd_train(RunContext& ctx, Manifest& manifest) {
  const TrainConfig tc = train_config(ctx.cfg);
  const Dataset ds = load_dataset(ctx.cfg);
  DataSplit split;
  try {
    split = make_split(ds, tc.test_fraction, tc.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const bool wall = ctx.cfg.flag("wall-time");
  TrainResult result = train(split, tc);

  const fs::path csv = ctx.out / "metrics.csv";
  {
    CsvWriter w(csv);
    w.header(record_columns(wall));
    for (const auto& r : result.records) w.row(record_cells(r, wall));
  }
  manifest.add_output(csv);
  const fs::path ckpt = ctx.out / "encoder.bin";
  save_checkpoint(ckpt, result.params);
  manifest.add_output(ckpt);
  if (ctx.plot) plot_records(ctx.out, result.records, manifest);

  const auto& first = result.records.front();
  const auto& last = result.records.back();
  *ctx.log << to_string(tc.loss) << ": test mAP " << format_double(first.test_map) << " -> "
           << format_double(last.test_map) << " after " << last.step << " steps\n";
}

void cmd_eval(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  Dataset ds = load_dataset(c);
  const std::string split = c.str("split");
  if (split == "test") {
    try {
      ds = make_split(ds, c.real("test-fraction"), c.u64("seed")).test;
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else if (split != "all") {
    throw UsageError("--split: expected all or test, got '" + split + "'");
  }
  std::vector<int> ks;
  for (auto k : c.u64s("ks")) ks.push_back(static_cast<int>(k));

  EvalResult res;
  const std::string ckpt = c.str("checkpoint");
  if (ckpt.empty()) {
    res = evaluate_raw(ds, ks);
  } else {
    EncoderParams params;
    try {
      params = load_checkpoint(ckpt);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (params.config().d_in != ds.dim()) {
      throw UsageError("checkpoint expects " + std::to_string(params.config().d_in) +
                       " features, dataset has " + std::to_string(ds.dim()));
    }
    res = evaluate(ds, params, ks);
  }

  const fs::path csv = ctx.out / "eval.csv";
  {
    CsvWriter w(csv);
    std::vector<std::string> head{"instances", "classes", "map"};
    std::vector<std::string> row{std::to_string(ds.size()), std::to_string(ds.num_classes()),
                                 format_double(res.map)};
    for (const auto& [k, v] : res.recall) {
      head.push_back("recall_at_" + std::to_string(k));
      row.push_back(format_double(v));
    }
    w.header(head);
    w.row(row);
  }
  manifest.add_output(csv);
  *ctx.log << "mAP " << format_double(res.map) << " over " << ds.size() << " instances\n";
}

void cmd_ablate(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  const TrainConfig base = train_config(c);
  AblationParam param;
  try {
    param = parse_ablation_param(c.required("param"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto values = c.reals("values");
  const auto seeds = c.u64s("seeds");
  const std::size_t jobs = std::max<std::size_t>(1, c.count("jobs"));
  const Dataset ds = load_dataset(c);

  std::vector<AblationRow> rows;
  try {
    rows = ablate(ds, base, param, values, seeds, jobs);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path csv = ctx.out / "ablation.csv";
  {
    CsvWriter w(csv);
    std::vector<std::string> head{"param", "value", "mean_map", "mean_recall_at_1"};
    for (auto s : seeds) head.push_back("map_seed_" + std::to_string(s));
    w.header(head);
    for (const auto& r : rows) {
      std::vector<std::string> cells{r.param, format_double(r.value), format_double(r.mean_map),
                                     format_double(r.mean_recall_at_1)};
      for (double m : r.final_map) cells.push_back(format_double(m));
      w.row(cells);
    }
  }
  manifest.add_output(csv);
  if (ctx.plot) {
    PlotSeries s{"mean mAP", {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(r.value);
      s.y.push_back(r.mean_map);
    }
    const fs::path p = ctx.out / "ablation.svg";
    write_line_plot(p, "ablation over " + to_string(param), to_string(param), "final test mAP", {s});
    manifest.add_output(p);
  }
  for (const auto& r : rows) {
    *ctx.log << r.param << "=" << format_double(r.value) << ": mean mAP "
             << format_double(r.mean_map) << '\n';
  }
}

// Tolerances used when --tolerance is not given.
double default_tolerance(LossKind loss, double tau) {
  if (loss != LossKind::kSmoothAp) return 1e-6;
  return tau >= 1.0 ? 1e-5 : 1e-3;
}

void cmd_grad_check(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  GradCheckSpec spec;
  try {
    spec.loss = parse_loss_kind(c.str("loss"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  spec.tau = c.real("tau");
  if (spec.tau <= 0.0) throw UsageError("--tau must be positive");
  spec.batch = c.count("batch");
  spec.classes = c.count("classes");
  spec.d_in = c.count("d-in");
  spec.d_out = c.count("d-out");
  spec.fd_step = c.real("fd-step");
  spec.tolerance = c.str("tolerance").empty() ? default_tolerance(spec.loss, spec.tau)
                                              : c.real("tolerance");
  spec.clustered = c.flag("clustered");
  const std::size_t trials = c.count("trials");
  const std::uint64_t seed = c.u64("seed");

  const fs::path csv = ctx.out / "grad_check.csv";
  std::vector<GradCheckReport> reports;
  {
    CsvWriter w(csv);
    w.header({"trial", "embedding_rel_error", "param_rel_error", "max_abs_grad", "coordinates",
              "pass"});
    for (std::size_t t = 0; t < trials; ++t) {
      spec.seed = derive_seed(seed, t);
      GradCheckReport rep;
      try {
        rep = grad_check(spec);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      w.row({std::to_string(t), format_double(rep.embedding_rel_error),
             format_double(rep.param_rel_error), format_double(rep.max_abs_grad),
             std::to_string(rep.coordinates), rep.pass ? "1" : "0"});
      reports.push_back(rep);
    }
  }
  manifest.add_output(csv);
  if (ctx.plot) {
    PlotSeries emb{"embedding", {}, {}}, par{"parameters", {}, {}};
    for (std::size_t t = 0; t < reports.size(); ++t) {
      emb.x.push_back(static_cast<double>(t));
      emb.y.push_back(reports[t].embedding_rel_error);
      par.x.push_back(static_cast<double>(t));
      par.y.push_back(reports[t].param_rel_error);
    }
    const fs::path p = ctx.out / "grad_check.svg";
    write_line_plot(p, "gradient check", "trial", "max relative error", {emb, par});
    manifest.add_output(p);
  }

  double worst = 0.0;
  std::size_t failed = 0;
  for (const auto& r : reports) {
    worst = std::max({worst, r.embedding_rel_error, r.param_rel_error});
    failed += r.pass ? 0 : 1;
  }
  *ctx.log << "max relative error " << format_double(worst) << " (tolerance "
           << format_double(spec.tolerance) << "), " << failed << "/" << reports.size()
           << " trials failed\n";
  if (failed > 0) throw DiagnosticFailure("gradient check failed");
}

void cmd_approx_error(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  const TrainConfig base = train_config(c);
  const auto taus = c.reals("taus");
  for (double t : taus) {
    if (t <= 0.0) throw UsageError("--taus: temperatures must be positive");
  }
  const Dataset ds = load_dataset(c);
  DataSplit split;
  try {
    split = make_split(ds, base.test_fraction, base.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto rows = approx_error_sweep(split, base, taus, base.steps);

  const fs::path csv = ctx.out / "approx_error.csv";
  {
    CsvWriter w(csv);
    w.header({"tau", "step", "ap_error"});
    for (const auto& r : rows) {
      w.row({format_double(r.tau), std::to_string(r.step), format_double(r.ap_error)});
    }
  }
  manifest.add_output(csv);
  if (ctx.plot) {
    std::vector<PlotSeries> series;
    for (double t : taus) {
      PlotSeries s{"tau=" + format_double(t), {}, {}};
      for (const auto& r : rows) {
        if (r.tau != t) continue;
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(r.ap_error);
      }
      series.push_back(std::move(s));
    }
    const fs::path p = ctx.out / "approx_error.svg";
    write_line_plot(p, "AP approximation error", "step", "|smoothed AP - AP|", series);
    manifest.add_output(p);
  }
  for (double t : taus) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.tau == t) sum += r.ap_error, ++n;
    }
    *ctx.log << "tau=" << format_double(t) << ": mean AP error "
             << format_double(n ? sum / static_cast<double>(n) : 0.0) << '\n';
  }
}

void cmd_region_sweep(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  RegionSweepConfig rc;
  rc.per_class = c.count("per-class");
  rc.d_out = c.count("d-out");
  rc.smooth.tau = c.real("tau");
  rc.smooth.grad_threshold = c.real("threshold");
  rc.seed = c.u64("seed");
  try {
    rc.smooth.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<std::size_t> batches;
  for (auto b : c.u64s("batches")) batches.push_back(static_cast<std::size_t>(b));
  const Dataset ds = load_dataset(c);
  std::vector<RegionRow> rows;
  try {
    rows = operating_region_sweep(ds, batches, rc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path csv = ctx.out / "region.csv";
  {
    CsvWriter w(csv);
    w.header({"batch_size", "batches", "mean_fraction"});
    for (const auto& r : rows) {
      w.row({std::to_string(r.batch_size), std::to_string(r.batches),
             format_double(r.mean_fraction)});
    }
  }
  manifest.add_output(csv);
  if (ctx.plot) {
    PlotSeries s{"mean P", {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(static_cast<double>(r.batch_size));
      s.y.push_back(r.mean_fraction);
    }
    const fs::path p = ctx.out / "region.svg";
    write_line_plot(p, "operating-region fraction (untrained encoder)", "batch size", "P", {s});
    manifest.add_output(p);
  }
  *ctx.log << "region half-width " << format_double(operating_region_half_width(rc.smooth)) << '\n';
  for (const auto& r : rows) {
    *ctx.log << "B=" << r.batch_size << ": P " << format_double(r.mean_fraction) << '\n';
  }
}

void cmd_timing(RunContext& ctx, Manifest& manifest) {
  const Config& c = ctx.cfg;
  TimingConfig tc;
  tc.per_class = c.count("per-class");
  tc.dim = c.count("dim");
  tc.tau = c.real("tau");
  tc.warmups = c.count("warmups");
  tc.repeats = c.count("repeats");
  tc.seed = c.u64("seed");
  if (tc.tau <= 0.0) throw UsageError("--tau must be positive");
  if (tc.repeats == 0) throw UsageError("--repeats must be positive");
  std::vector<std::size_t> batches;
  for (auto b : c.u64s("batches")) batches.push_back(static_cast<std::size_t>(b));
  std::vector<TimingRow> rows;
  try {
    rows = loss_timing(batches, tc);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path csv = ctx.out / "timing.csv";
  {
    CsvWriter w(csv);
    w.header({"batch_size", "median_ms", "min_ms", "max_ms"});
    for (const auto& r : rows) {
      w.row({std::to_string(r.batch_size), format_double(r.median_ms), format_double(r.min_ms),
             format_double(r.max_ms)});
    }
  }
  manifest.add_output(csv);
  if (ctx.plot) {
    PlotSeries s{"median ms", {}, {}};
    for (const auto& r : rows) {
      s.x.push_back(static_cast<double>(r.batch_size));
      s.y.push_back(r.median_ms);
    }
    const fs::path p = ctx.out / "timing.svg";
    write_line_plot(p, "smooth-AP loss wall time", "batch size", "ms", {s});
    manifest.add_output(p);
  }
  for (const auto& r : rows) {
    *ctx.log << "B=" << r.batch_size << ": " << format_double(r.median_ms) << " ms\n";
  }
}

struct Command {
  std::string name;
  std::string help;
  void (*fn)(RunContext&, Manifest&);
  bool out_is_file = false;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> kCommands = {
      {"gen-data", "write a synthetic Gaussian-cluster dataset", cmd_gen_data, true},
      {"train", "train an encoder and log metrics", cmd_train},
      {"eval", "mAP and Recall@K of raw features or a checkpoint", cmd_eval},
      {"ablate", "vary one training parameter over several seeds", cmd_ablate},
      {"grad-check", "compare analytic and finite-difference gradients", cmd_grad_check},
      {"approx-error", "smoothed-vs-exact AP gap during training", cmd_approx_error},
      {"region-sweep", "operating-region fraction against batch size", cmd_region_sweep},
      {"timing", "loss wall time against batch size", cmd_timing},
  };
  return kCommands;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const std::invalid_argument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(ss, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(n) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(n) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smooth-AP metric learning experiments on synthetic and CSV feature data",
               "ranksmooth"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(RANKSMOOTH_GIT_DESCRIBE));

  struct SubState {
    CLI::App* app = nullptr;
    const Command* cmd = nullptr;
    std::vector<KeySpec> keys;
    std::map<std::string, std::string> given;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> opts;
    std::string out;
    std::string config;
    bool plot = false;
  };
  std::vector<std::unique_ptr<SubState>> subs;
  for (const auto& cmd : commands()) {
    auto st = std::make_unique<SubState>();
    st->cmd = &cmd;
    st->app = app.add_subcommand(cmd.name, cmd.help);
    st->keys = keys_for(cmd.name);
    for (const auto& k : st->keys) {
      const std::string help = k.help + (k.default_value.empty() || k.is_flag
                                             ? std::string()
                                             : " [default " + k.default_value + "]");
      if (k.is_flag) {
        st->opts[k.name] = st->app->add_flag("--" + k.name, st->flags[k.name], help);
      } else {
        st->opts[k.name] = st->app->add_option("--" + k.name, st->given[k.name], help);
      }
    }
    st->app->add_option("-o,--out", st->out,
                        cmd.out_is_file ? "output CSV file" : "output directory")
        ->required();
    st->app->add_option("--config", st->config, "key = value file; flags take precedence");
    if (!cmd.out_is_file) st->app->add_flag("--plot", st->plot, "also write SVG line plots");
    subs.push_back(std::move(st));
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    for (const auto& st : subs) {
      if (st->app->parsed()) {
        out.flush();
      }
    }
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << RANKSMOOTH_GIT_DESCRIBE << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // A subcommand's --help surfaces as CallForHelp from the subcommand.
    if (e.get_exit_code() == 0) {
      for (const auto& st : subs) {
        if (st->app->parsed()) {
          out << st->app->help();
          return kExitOk;
        }
      }
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  SubState* active = nullptr;
  for (const auto& st : subs) {
    if (st->app->parsed()) active = st.get();
  }
  if (active == nullptr) {
    err << "error: no command given\n";
    return kExitUsage;
  }

  std::unique_ptr<Manifest> manifest;
  try {
    // Precedence: flag, then config file, then (for seed) the environment, then default.
    std::map<std::string, std::string> from_file;
    if (!active->config.empty()) from_file = read_config_file(active->config);
    Config cfg;
    for (const auto& k : active->keys) cfg.values[k.name] = k.default_value;
    for (const auto& [key, value] : from_file) {
      if (!cfg.values.count(key)) {
        throw UsageError("config file: unknown key '" + key + "' for " + active->cmd->name);
      }
    }
    for (const auto& k : active->keys) {
      if (active->opts[k.name]->count() > 0) {
        cfg.values[k.name] = k.is_flag ? "true" : active->given[k.name];
      } else if (from_file.count(k.name)) {
        cfg.values[k.name] = from_file[k.name];
      } else if (k.name == "seed") {
        if (const char* env = std::getenv("RANK_SMOOTH_SEED"); env != nullptr && *env != '\0') {
          cfg.values[k.name] = env;
        }
      }
    }

    RunContext ctx{cfg, fs::path(active->out), active->plot, &out};
    fs::path manifest_path;
    if (active->cmd->out_is_file) {
      if (ctx.out.has_parent_path()) fs::create_directories(ctx.out.parent_path());
      manifest_path = fs::path(ctx.out.string() + ".manifest.json");
    } else {
      fs::create_directories(ctx.out);
      manifest_path = ctx.out / "manifest.json";
    }
    // Seed must parse before the manifest records it.
    if (cfg.values.count("seed")) cfg.u64("seed");
    manifest = std::make_unique<Manifest>(manifest_path, active->cmd->name, cfg);
    active->cmd->fn(ctx, *manifest);
    manifest->finish("ok");
    return kExitOk;
  } catch (const UsageError& e) {
    if (manifest) manifest->finish("usage-error");
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DiagnosticFailure& e) {
    if (manifest) manifest->finish("failed");
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    if (manifest) manifest->finish("error");
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ranksmooth::cli
