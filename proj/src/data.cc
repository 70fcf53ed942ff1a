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

#include "ranksmooth/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <string_view>
#include <unordered_set>

#include "ranksmooth/csv_writer.h"

namespace ranksmooth {

void Dataset::rebuild_index() {
  class_index.clear();
  for (std::size_t i = 0; i < class_ids.size(); ++i) class_index[class_ids[i]].push_back(i);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = Matrix(rows.size(), dim());
  out.ids.reserve(rows.size());
  out.class_ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    out.ids.push_back(ids.empty() ? std::to_string(src) : ids[src]);
    out.class_ids.push_back(class_ids[src]);
    std::ranges::copy(features.row(src), out.features.row(r).begin());
  }
  out.rebuild_index();
  return out;
}

Dataset Dataset::filter_small_classes(std::size_t min_instances) const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < size(); ++i) {
    if (class_index.at(class_ids[i]).size() >= min_instances) keep.push_back(i);
  }
  return subset(keep);
}

Dataset gen_synthetic_clusters(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("gen_synthetic_clusters: need >= 2 classes");
  if (spec.per_class < 2) {
    throw std::invalid_argument("gen_synthetic_clusters: need >= 2 instances per class");
  }
  if (spec.d_in == 0) throw std::invalid_argument("gen_synthetic_clusters: d_in must be positive");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw std::invalid_argument("gen_synthetic_clusters: noise_sigma must be >= 0");
  }
  if (spec.signal_dim > spec.d_in) {
    throw std::invalid_argument("gen_synthetic_clusters: signal_dim exceeds d_in");
  }
  const std::size_t sig = spec.signal_dim == 0 ? spec.d_in : spec.signal_dim;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Orthonormal basis of the signal subspace (Gram-Schmidt on Gaussian
  // vectors); the identity when the subspace is the whole space.
  Matrix basis(sig, spec.d_in);
  if (sig == spec.d_in) {
    for (std::size_t i = 0; i < sig; ++i) basis(i, i) = 1.0;
  } else {
    for (std::size_t i = 0; i < sig; ++i) {
      auto b = basis.row(i);
      for (;;) {
        for (double& v : b) v = gauss(rng);
        for (std::size_t k = 0; k < i; ++k) {
          const double proj = Dot(b, basis.row(k));
          const auto bk = basis.row(k);
          for (std::size_t c = 0; c < spec.d_in; ++c) b[c] -= proj * bk[c];
        }
        const double n = Norm(b);
        if (n > 1e-8) {
          for (double& v : b) v /= n;
          break;
        }
      }
    }
  }

  Matrix means(spec.num_classes, spec.d_in);
  std::vector<double> coeff(sig);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    double n = 0.0;
    while (n < 1e-12) {
      for (double& v : coeff) v = gauss(rng);
      n = Norm(coeff);
    }
    auto mean = means.row(c);
    for (std::size_t k = 0; k < sig; ++k) {
      const auto bk = basis.row(k);
      for (std::size_t d = 0; d < spec.d_in; ++d) mean[d] += coeff[k] / n * bk[d];
    }
  }

  Dataset ds;
  const std::size_t total = spec.num_classes * spec.per_class;
  ds.features = Matrix(total, spec.d_in);
  ds.ids.reserve(total);
  ds.class_ids.reserve(total);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  std::size_t r = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i, ++r) {
      auto row = ds.features.row(r);
      const auto mean = means.row(c);
      for (std::size_t d = 0; d < spec.d_in; ++d) {
        row[d] = mean[d] + (spec.noise_sigma > 0 ? noise(rng) : 0.0);
      }
      ds.ids.push_back(std::to_string(r));
      ds.class_ids.push_back(static_cast<int>(c));
    }
  }
  ds.rebuild_index();
  return ds;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Dataset load_features_csv(const std::filesystem::path& path, std::size_t min_instances) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CsvError(CsvError::Kind::kIo, 0, "cannot open " + path.string());

  std::vector<std::string> ids;
  std::vector<int> classes;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::size_t dim = 0;
  bool have_dim = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view);
    if (line_no == 1 && fields[0] == "id") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 3) {
      throw CsvError(CsvError::Kind::kRagged, line_no,
                     where + ": expected id,class_id and at least one feature");
    }
    const std::size_t d = fields.size() - 2;
    if (!have_dim) {
      dim = d;
      have_dim = true;
    } else if (d != dim) {
      throw CsvError(CsvError::Kind::kRagged, line_no,
                     where + ": expected " + std::to_string(dim) + " features, found " +
                         std::to_string(d));
    }
    if (fields[0].empty()) throw CsvError(CsvError::Kind::kNonNumeric, line_no, where + ": empty id");
    std::string id(fields[0]);
    if (!seen.insert(id).second) {
      throw CsvError(CsvError::Kind::kDuplicateId, line_no, where + ": duplicate id '" + id + "'");
    }
    int cls = 0;
    if (!parse_number(fields[1], cls)) {
      throw CsvError(CsvError::Kind::kNonNumeric, line_no,
                     where + ": class_id '" + std::string(fields[1]) + "' is not an integer");
    }
    for (std::size_t f = 2; f < fields.size(); ++f) {
      double v = 0.0;
      if (!parse_number(fields[f], v) || !std::isfinite(v)) {
        throw CsvError(CsvError::Kind::kNonNumeric, line_no,
                       where + ": feature " + std::to_string(f - 2) + " '" +
                           std::string(fields[f]) + "' is not a finite number");
      }
      values.push_back(v);
    }
    ids.push_back(std::move(id));
    classes.push_back(cls);
  }
  if (ids.empty()) throw CsvError(CsvError::Kind::kEmpty, line_no, path.string() + ": no data rows");

  Dataset ds;
  ds.ids = std::move(ids);
  ds.class_ids = std::move(classes);
  ds.features = Matrix(ds.class_ids.size(), dim, std::move(values));
  ds.rebuild_index();
  if (min_instances > 1) ds = ds.filter_small_classes(min_instances);
  return ds;
}

void save_features_csv(const Dataset& ds, const std::filesystem::path& path) {
  CsvWriter w(path);
  std::vector<std::string> cells{"id", "class_id"};
  for (std::size_t d = 0; d < ds.dim(); ++d) cells.push_back("f" + std::to_string(d));
  w.header(cells);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    cells.clear();
    cells.push_back(ds.ids.empty() ? std::to_string(r) : ds.ids[r]);
    cells.push_back(std::to_string(ds.class_ids[r]));
    for (double v : ds.features.row(r)) cells.push_back(format_double(v));
    w.row(cells);
  }
}

std::pair<Dataset, Dataset> split_by_class(const Dataset& ds, double test_fraction,
                                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("split_by_class: test_fraction must lie in (0, 1)");
  }
  std::vector<int> classes;
  for (const auto& [c, rows] : ds.class_index) classes.push_back(c);
  if (classes.size() < 2) throw std::invalid_argument("split_by_class: need at least two classes");

  std::mt19937_64 rng(seed);
  for (std::size_t i = classes.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(classes[i], classes[pick(rng)]);
  }
  auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(classes.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, classes.size() - 1);
  const std::set<int> test_classes(classes.begin(), classes.begin() + n_test);

  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (test_classes.contains(ds.class_ids[i]) ? test_rows : train_rows).push_back(i);
  }
  return {ds.subset(train_rows), ds.subset(test_rows)};
}

void SamplerConfig::validate() const {
  if (batch_size == 0 || per_class == 0) {
    throw std::invalid_argument("sampler: batch size and per-class count must be positive");
  }
  if (batch_size % per_class != 0) {
    throw std::invalid_argument("sampler: batch size " + std::to_string(batch_size) +
                                " is not a multiple of per-class count " +
                                std::to_string(per_class));
  }
}

BatchDraw next_batch(const Dataset& ds, const SamplerConfig& cfg, std::mt19937_64 rng) {
  cfg.validate();
  std::vector<int> eligible;
  for (const auto& [c, rows] : ds.class_index) {
    if (rows.size() >= cfg.per_class) eligible.push_back(c);
  }
  const std::size_t need = cfg.classes_per_batch();
  if (eligible.size() < need) {
    throw std::invalid_argument("sampler: batch needs " + std::to_string(need) +
                                " classes with >= " + std::to_string(cfg.per_class) +
                                " instances, dataset has " + std::to_string(eligible.size()));
  }
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  BatchDraw out;
  out.indices.reserve(cfg.batch_size);
  for (std::size_t i = 0; i < need; ++i) {
    std::vector<std::size_t> rows = ds.class_index.at(eligible[i]);
    for (std::size_t k = 0; k < cfg.per_class; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, rows.size() - 1);
      std::swap(rows[k], rows[pick(rng)]);
      out.indices.push_back(rows[k]);
    }
  }
  out.rng = rng;
  return out;
}

}  // namespace ranksmooth
