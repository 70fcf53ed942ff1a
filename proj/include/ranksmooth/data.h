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

#ifndef RANKSMOOTH_DATA_H_
#define RANKSMOOTH_DATA_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ranksmooth/matrix.h"

namespace ranksmooth {

struct Dataset {
  std::vector<std::string> ids;
  Matrix features;  // N x d_in
  std::vector<int> class_ids;
  std::map<int, std::vector<std::size_t>> class_index;

  std::size_t size() const { return class_ids.size(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t num_classes() const { return class_index.size(); }

  void rebuild_index();
  Dataset subset(std::span<const std::size_t> rows) const;
  // Drops classes with fewer than min_instances members.
  Dataset filter_small_classes(std::size_t min_instances) const;
};

struct SyntheticSpec {
  std::size_t num_classes = 50;
  std::size_t per_class = 20;
  std::size_t d_in = 64;
  double noise_sigma = 0.35;
  // Class means live on the unit sphere of a random subspace of this
  // dimension; 0 means the full d_in-dimensional sphere.
  std::size_t signal_dim = 8;
  std::uint64_t seed = 7;
};

// Class means uniform on the unit sphere, instances = mean + N(0, sigma^2 I).
// Rows are grouped by class; ids are "0".."N-1".
Dataset gen_synthetic_clusters(const SyntheticSpec& spec);

class CsvError : public std::runtime_error {
 public:
  enum class Kind { kIo, kEmpty, kRagged, kNonNumeric, kDuplicateId };
  CsvError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

// Rows `id,class_id,f0,...,f{d-1}`; an optional first line starting with
// "id," is treated as a header.
Dataset load_features_csv(const std::filesystem::path& path, std::size_t min_instances = 2);
void save_features_csv(const Dataset& ds, const std::filesystem::path& path);

// Partitions the class set; neither side shares a class with the other.
std::pair<Dataset, Dataset> split_by_class(const Dataset& ds, double test_fraction,
                                           std::uint64_t seed);

struct SamplerConfig {
  std::size_t batch_size = 64;
  std::size_t per_class = 4;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t classes_per_batch() const { return batch_size / per_class; }
};

struct BatchDraw {
  std::vector<std::size_t> indices;  // rows of the dataset, grouped by class
  std::mt19937_64 rng;               // state to pass to the next call
};

// Picks batch_size/per_class distinct classes uniformly from those with at
// least per_class instances, then per_class instances of each without
// replacement.
BatchDraw next_batch(const Dataset& ds, const SamplerConfig& cfg, std::mt19937_64 rng);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_DATA_H_
