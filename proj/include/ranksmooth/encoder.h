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

#ifndef RANKSMOOTH_ENCODER_H_
#define RANKSMOOTH_ENCODER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "ranksmooth/matrix.h"
#include "ranksmooth/ranking.h"

namespace ranksmooth {

struct EncoderConfig {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  bool bias = false;
  // 0 for the single linear layer; otherwise width of a tanh hidden layer.
  std::size_t hidden = 0;
};

struct Layer {
  Matrix weight;              // inputs x outputs
  std::vector<double> bias;   // empty when the encoder has no bias
};

// Trainable map features -> embedding (before normalization). One layer, or
// two with a tanh in between.
class EncoderParams {
 public:
  EncoderParams() = default;
  explicit EncoderParams(EncoderConfig cfg);  // zero-filled

  // Weights uniform in +-1/sqrt(fan_in); biases start at zero.
  static EncoderParams init_uniform(EncoderConfig cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t num_params() const;
  // Layer by layer: weight (row-major) then bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const EncoderParams&) const;

 private:
  EncoderConfig cfg_;
  std::vector<Layer> layers_;
};

// Raised when a projected row has zero norm and cannot be normalized.
class NormalizationError : public std::runtime_error {
 public:
  NormalizationError(const std::string& what, std::size_t row)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

EmbeddingBatch encode(const Matrix& features, std::span<const int> class_ids,
                      const EncoderParams& params);

// Gradient with respect to every parameter, given dL/d(normalized
// embedding). The normalization Jacobian drops the radial component.
EncoderParams encode_backward(const Matrix& features, const EncoderParams& params,
                              const Matrix& upstream_grad);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-5;
  double weight_decay = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(std::size_t n, double lr = 1e-5, double weight_decay = 4e-5);
};

struct AdamUpdate {
  std::vector<double> params;
  AdamState state;
};

// Bias-corrected Adam. Weight decay is coupled: lambda * param is added to
// the gradient before the moment updates.
AdamUpdate adam_step(std::span<const double> params, std::span<const double> grads,
                     AdamState state);

// Checkpoint layout (all little-endian):
//   bytes 0-3   magic "RSEN"
//   bytes 4-7   uint32 d_in
//   bytes 8-11  uint32 d_out
//   bytes 12-15 uint32 flags: bit 0 = bias, bits 8-31 = hidden width
//   then float64 values in flatten() order.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ranksmooth

#endif  // RANKSMOOTH_ENCODER_H_
