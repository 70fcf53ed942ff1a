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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   acceptance_test                 run every criterion
//   acceptance_test --criterion 6   run one

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.h"
#include "oracles.h"
#include "ranksmooth/baselines.h"
#include "ranksmooth/csv_writer.h"
#include "ranksmooth/experiments.h"
#include "ranksmooth/ranking.h"
#include "ranksmooth/smooth_ap.h"

namespace ranksmooth {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances and thresholds.
constexpr double kApOracleTol = 1e-12;
constexpr double kApOracleSeconds = 10.0;
constexpr double kWorkedExampleAp = 0.729167;
constexpr double kWorkedExampleTol = 1e-6;
constexpr double kGradTolTauOne = 1e-5;
constexpr double kGradTolTauSmall = 1e-3;
constexpr double kGradTolBaselines = 1e-6;
constexpr double kGradSeconds = 60.0;
constexpr double kTinyTauErrorMax = 1e-3;
constexpr double kMinScoreGap = 0.01;
constexpr double kHalfWidthTarget = 0.099;
constexpr double kHalfWidthRelTol = 0.10;
constexpr double kMinMapGain = 0.15;
constexpr double kTrainSeconds = 120.0;
constexpr double kScalingLow = 3.0;
constexpr double kScalingHigh = 6.0;

// Learning rate for the training criteria. The library default targets
// fine-tuning a pretrained backbone; from-scratch linear encoders use the
// usual Adam rate.
constexpr double kTrainLr = 1e-3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Outcome ApOracleEquivalence() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t m = 1; m <= 8; ++m) {
      for (unsigned mask = 1; mask < (1u << m); ++mask) {
        ScoredSet s;
        s.scores = oracle::distinct_scores(m, rng);
        for (std::size_t i = 0; i < m; ++i) s.labels.push_back((mask >> i) & 1u);
        worst = std::max(worst, std::abs(exact_ap(s) - oracle::precision_at_hits(s.scores, s.labels)));
        ++cases;
      }
    }
  }
  const double secs = Seconds(start);
  return {worst <= kApOracleTol && secs < kApOracleSeconds,
          "max |diff| " + Fmt(worst) + " over " + std::to_string(cases) + " cases in " +
              Fmt(secs) + " s"};
}

Outcome WorkedExample() {
  // Ranked order 0,4,1,2,5,6,7,3; labels along that order 1,0,1,1,0,0,0,1.
  ScoredSet s{{8, 6, 5, 1, 7, 4, 3, 2}, {true, true, true, true, false, false, false, false}};
  const double ap = exact_ap(s);
  const std::vector<ViolatingPair> expected{{4, 1}, {4, 2}, {4, 3}, {5, 3}, {6, 3}, {7, 3}};
  const auto pairs = violating_terms(s);
  return {std::abs(ap - kWorkedExampleAp) <= kWorkedExampleTol && pairs == expected,
          "AP " + Fmt(ap) + ", " + std::to_string(pairs.size()) + " violating pairs" +
              (pairs == expected ? " (as listed)" : " (mismatch)")};
}

Outcome GradientCorrectness() {
  const auto start = Clock::now();
  struct Case {
    LossKind loss;
    double tau;
    double tol;
  };
  const std::vector<Case> cases{{LossKind::kSmoothAp, 1.0, kGradTolTauOne},
                                {LossKind::kSmoothAp, 0.01, kGradTolTauSmall},
                                {LossKind::kTriplet, 1.0, kGradTolBaselines},
                                {LossKind::kContrastive, 1.0, kGradTolBaselines}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::uint64_t b = 0; b < 20; ++b) {
      GradCheckSpec spec;
      spec.loss = c.loss;
      spec.batch = 16;
      spec.d_out = 8;
      spec.tau = c.tau;
      spec.fd_step = 1e-6;
      spec.tolerance = c.tol;
      spec.seed = derive_seed(1000, b);
      const auto rep = grad_check(spec);
      worst = std::max({worst, rep.embedding_rel_error, rep.param_rel_error});
    }
    pass = pass && worst < c.tol;
    detail += to_string(c.loss) + (c.loss == LossKind::kSmoothAp ? "@" + Fmt(c.tau) : "") + " " +
              Fmt(worst) + "; ";
  }
  const double secs = Seconds(start);
  return {pass && secs < kGradSeconds, detail + Fmt(secs) + " s"};
}

EmbeddingBatch RandomBatch(std::size_t classes, std::size_t per_class, std::size_t dim,
                           std::mt19937_64& rng) {
  std::vector<int> ids;
  for (std::size_t c = 0; c < classes; ++c) ids.insert(ids.end(), per_class, static_cast<int>(c));
  return {oracle::random_unit_rows(classes * per_class, dim, rng), ids};
}

double MinQueryScoreGap(const EmbeddingBatch& b) {
  const Matrix s = similarity_matrix(b);
  double gap = 2.0;
  for (std::size_t q = 0; q < b.size(); ++q) {
    std::vector<double> row;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (j != q) row.push_back(s(q, j));
    }
    std::sort(row.begin(), row.end());
    for (std::size_t i = 1; i < row.size(); ++i) gap = std::min(gap, row[i] - row[i - 1]);
  }
  return gap;
}

Outcome TightnessOrdering() {
  std::mt19937_64 rng(404);
  double e001 = 0.0, e01 = 0.0, e1 = 0.0;
  for (int b = 0; b < 100; ++b) {
    const auto batch = RandomBatch(8, 4, 16, rng);
    e001 += batch_ap_error(batch, {0.001, 0.005});
    e01 += batch_ap_error(batch, {0.01, 0.005});
    e1 += batch_ap_error(batch, {0.1, 0.005});
  }
  e001 /= 100.0, e01 /= 100.0, e1 /= 100.0;

  double tiny = 0.0;
  int accepted = 0, drawn = 0;
  while (accepted < 100 && drawn < 1000000) {
    ++drawn;
    const auto batch = RandomBatch(4, 2, 16, rng);
    if (MinQueryScoreGap(batch) < kMinScoreGap) continue;
    ++accepted;
    tiny = std::max(tiny, batch_ap_error(batch, {1e-6, 0.005}));
  }
  const bool ordered = e001 < e01 && e01 < e1;
  return {ordered && accepted == 100 && tiny < kTinyTauErrorMax,
          "AP_e 0.001=" + Fmt(e001) + " 0.01=" + Fmt(e01) + " 0.1=" + Fmt(e1) +
              "; max AP_e(1e-6) " + Fmt(tiny) + " over " + std::to_string(accepted) +
              " gap-filtered batches"};
}

Outcome OperatingRegionTrend() {
  const Dataset ds = gen_synthetic_clusters(SyntheticSpec{});
  const std::vector<std::size_t> sizes{32, 64, 128, 256};
  const auto rows = operating_region_sweep(ds, sizes, RegionSweepConfig{});
  bool monotone = true;
  std::string detail = "P";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += " B" + std::to_string(rows[i].batch_size) + "=" + Fmt(rows[i].mean_fraction);
    if (i > 0 && rows[i].mean_fraction < rows[i - 1].mean_fraction) monotone = false;
  }
  const double w = operating_region_half_width({0.01, 0.005});
  const bool width_ok = std::abs(w - kHalfWidthTarget) <= kHalfWidthRelTol * kHalfWidthTarget;
  detail += monotone ? " (nondecreasing)" : " (not monotone)";
  detail += "; half-width " + Fmt(w);
  return {monotone && width_ok, detail};
}

TrainConfig AcceptanceTrainConfig() {
  TrainConfig c;
  c.tau = 0.01;
  c.batch_size = 64;
  c.per_class = 4;
  c.steps = 2000;
  c.eval_every = 0;
  c.d_out = 16;
  c.lr = kTrainLr;
  c.seed = 0;
  return c;
}

Outcome TrainingEfficacy() {
  const Dataset ds = gen_synthetic_clusters(SyntheticSpec{});
  TrainConfig c = AcceptanceTrainConfig();
  const DataSplit split = make_split(ds, c.test_fraction, c.seed);

  const auto start = Clock::now();
  const auto smooth = train(split, c).records;
  const double secs = Seconds(start);
  c.loss = LossKind::kTriplet;
  const auto triplet = train(split, c).records;

  const double untrained = smooth.front().test_map;
  const double gain = smooth.back().test_map - untrained;
  const bool gain_ok = gain >= kMinMapGain;
  const bool beats = smooth.back().test_map >= triplet.back().test_map;
  return {gain_ok && beats && secs < kTrainSeconds,
          "untrained " + Fmt(untrained) + " -> smooth-ap " + Fmt(smooth.back().test_map) +
              " (gain " + Fmt(gain) + (gain_ok ? ", ok" : ", short") + "), triplet " +
              Fmt(triplet.back().test_map) + (beats ? " (smooth-ap >= triplet)" : " (triplet ahead)") +
              "; smooth-ap run " + Fmt(secs) + " s"};
}

Outcome AblationTrends() {
  const Dataset ds = gen_synthetic_clusters(SyntheticSpec{});
  const TrainConfig base = AcceptanceTrainConfig();
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  struct Check {
    AblationParam param;
    double preferred;
    double other;
  };
  const std::vector<Check> checks{{AblationParam::kTau, 0.01, 0.1},
                                  {AblationParam::kPerClass, 4, 16},
                                  {AblationParam::kBatchSize, 128, 32}};
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    const std::vector<double> values{c.preferred, c.other};
    const auto rows = ablate(ds, base, c.param, values, seeds, 1);
    const bool ok = rows[0].mean_map >= rows[1].mean_map;
    pass = pass && ok;
    detail += to_string(c.param) + " " + Fmt(c.preferred) + ":" + Fmt(rows[0].mean_map) + " vs " +
              Fmt(c.other) + ":" + Fmt(rows[1].mean_map) + (ok ? " ok" : " reversed") + "; ";
  }
  return {pass, detail};
}

Outcome ComplexityScaling() {
  const std::vector<std::size_t> sizes{256, 512};
  const auto rows = loss_timing(sizes, TimingConfig{});
  const double ratio = rows[1].median_ms / rows[0].median_ms;
  return {ratio >= kScalingLow && ratio <= kScalingHigh,
          "t(256)=" + Fmt(rows[0].median_ms) + " ms, t(512)=" + Fmt(rows[1].median_ms) +
              " ms, ratio " + Fmt(ratio)};
}

std::string ReadFile(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome Determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("ranksmooth_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data.csv").string();

  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "ranksmooth");
    return cli::run(args, sink, sink);
  };
  if (cli({"gen-data", "-o", data}) != cli::kExitOk) {
    return {false, "gen-data failed: " + sink.str()};
  }
  const std::string lr = format_double(kTrainLr);
  const std::vector<std::vector<std::string>> commands{
      {"gen-data", "--seed", "11"},
      {"train", "--data", data, "--steps", "300", "--eval-every", "100", "--lr", lr},
      {"train", "--data", data, "--loss", "triplet", "--steps", "100", "--lr", lr},
      {"eval", "--data", data},
      {"ablate", "--data", data, "--param", "batch", "--values", "32,64", "--seeds", "0,1",
       "--steps", "100", "--lr", lr, "--jobs", "2"},
      {"grad-check", "--trials", "5"},
      {"approx-error", "--data", data, "--steps", "50", "--lr", lr},
      {"region-sweep", "--data", data},
  };

  std::size_t compared = 0;
  std::string mismatch;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::vector<fs::path> outs;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / ("cmd" + std::to_string(i) + "_" + std::to_string(rep));
      auto args = commands[i];
      const bool to_file = args[0] == "gen-data";
      args.push_back("-o");
      args.push_back(to_file ? (out.string() + ".csv") : out.string());
      if (cli(args) != cli::kExitOk) {
        fs::remove_all(root);
        return {false, args[0] + " failed: " + sink.str()};
      }
      outs.push_back(to_file ? fs::path(out.string() + ".csv") : out);
    }
    std::vector<std::pair<fs::path, fs::path>> files;
    if (fs::is_regular_file(outs[0])) {
      files.emplace_back(outs[0], outs[1]);
    } else {
      for (const auto& entry : fs::directory_iterator(outs[0])) {
        if (entry.path().extension() == ".csv") {
          files.emplace_back(entry.path(), outs[1] / entry.path().filename());
        }
      }
    }
    for (const auto& [a, b] : files) {
      ++compared;
      if (!fs::exists(b) || ReadFile(a) != ReadFile(b)) mismatch += a.filename().string() + " ";
    }
  }
  fs::remove_all(root);
  return {mismatch.empty() && compared >= commands.size(),
          std::to_string(compared) + " CSV files compared across " +
              std::to_string(commands.size()) + " commands" +
              (mismatch.empty() ? ", all bit-identical" : "; differing: " + mismatch)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const std::vector<Criterion>& Criteria() {
  static const std::vector<Criterion> kAll{
      {1, "AP oracle equivalence", ApOracleEquivalence},
      {2, "worked example", WorkedExample},
      {3, "gradient correctness", GradientCorrectness},
      {4, "approximation tightness ordering", TightnessOrdering},
      {5, "operating-region trend", OperatingRegionTrend},
      {6, "training efficacy", TrainingEfficacy},
      {7, "ablation trends", AblationTrends},
      {8, "complexity scaling", ComplexityScaling},
      {9, "determinism", Determinism},
  };
  return kAll;
}

}  // namespace
}  // namespace ranksmooth

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance_test [--criterion N]...\n";
      return 2;
    }
  }
  bool all_pass = true;
  for (const auto& c : ranksmooth::Criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    ranksmooth::Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": "
              << out.detail << std::endl;
  }
  return all_pass ? 0 : 1;
}
