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

#include "ranksmooth/encoder.h"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

namespace ranksmooth {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'S', 'E', 'N'};

// out = a * b (+ bias per column).
Matrix affine(const Matrix& a, const Matrix& b, const std::vector<double>& bias) {
  const std::size_t n = a.rows(), k = a.cols(), p = b.cols();
  Matrix out(n, p);
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < nn; ++r) {
    auto o = out.row(r);
    const auto ar = a.row(r);
    for (std::size_t t = 0; t < k; ++t) {
      const double v = ar[t];
      const auto br = b.row(t);
      for (std::size_t c = 0; c < p; ++c) o[c] += v * br[c];
    }
    if (!bias.empty()) {
      for (std::size_t c = 0; c < p; ++c) o[c] += bias[c];
    }
  }
  return out;
}

// a^T * g, summed over rows in index order.
Matrix transpose_times(const Matrix& a, const Matrix& g) {
  const std::size_t n = a.rows(), k = a.cols(), p = g.cols();
  Matrix out(k, p);
  const auto kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < kk; ++i) {
    auto o = out.row(i);
    for (std::size_t r = 0; r < n; ++r) {
      const double v = a(r, i);
      if (v == 0.0) continue;
      const auto gr = g.row(r);
      for (std::size_t c = 0; c < p; ++c) o[c] += v * gr[c];
    }
  }
  return out;
}

std::vector<double> column_sums(const Matrix& g) {
  std::vector<double> out(g.cols(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const auto gr = g.row(r);
    for (std::size_t c = 0; c < g.cols(); ++c) out[c] += gr[c];
  }
  return out;
}

struct Forward {
  Matrix hidden;       // tanh activations, empty for the linear encoder
  Matrix projected;    // pre-normalization output
  std::vector<double> norms;
};

Forward run_forward(const Matrix& features, const EncoderParams& params) {
  const auto& cfg = params.config();
  if (features.cols() != cfg.d_in) {
    throw std::invalid_argument("encode: feature dimension " + std::to_string(features.cols()) +
                                " does not match encoder d_in " + std::to_string(cfg.d_in));
  }
  const auto& layers = params.layers();
  Forward f;
  if (layers.size() == 1) {
    f.projected = affine(features, layers[0].weight, layers[0].bias);
  } else {
    f.hidden = affine(features, layers[0].weight, layers[0].bias);
    for (double& v : f.hidden.flat()) v = std::tanh(v);
    f.projected = affine(f.hidden, layers[1].weight, layers[1].bias);
  }
  f.norms.resize(f.projected.rows());
  for (std::size_t r = 0; r < f.projected.rows(); ++r) {
    const double n = Norm(f.projected.row(r));
    if (n == 0.0 || !std::isfinite(n)) {
      throw NormalizationError("encode: projected row " + std::to_string(r) +
                                   " has zero or non-finite norm",
                               r);
    }
    f.norms[r] = n;
  }
  return f;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

EncoderParams::EncoderParams(EncoderConfig cfg) : cfg_(cfg) {
  if (cfg.d_in == 0 || cfg.d_out == 0) {
    throw std::invalid_argument("EncoderParams: dimensions must be positive");
  }
  auto make = [&](std::size_t in, std::size_t out) {
    Layer l{Matrix(in, out), {}};
    if (cfg.bias) l.bias.assign(out, 0.0);
    return l;
  };
  if (cfg.hidden == 0) {
    layers_.push_back(make(cfg.d_in, cfg.d_out));
  } else {
    layers_.push_back(make(cfg.d_in, cfg.hidden));
    layers_.push_back(make(cfg.hidden, cfg.d_out));
  }
}

EncoderParams EncoderParams::init_uniform(EncoderConfig cfg, std::uint64_t seed) {
  EncoderParams p(cfg);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.rows()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight.flat()) w = dist(rng);
  }
  return p;
}

std::size_t EncoderParams::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> EncoderParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_params());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.flat().begin(), l.weight.flat().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void EncoderParams::assign(std::span<const double> flat) {
  if (flat.size() != num_params()) {
    throw std::invalid_argument("EncoderParams::assign: expected " +
                                std::to_string(num_params()) + " values, got " +
                                std::to_string(flat.size()));
  }
  std::size_t at = 0;
  for (auto& l : layers_) {
    for (double& w : l.weight.flat()) w = flat[at++];
    for (double& b : l.bias) b = flat[at++];
  }
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  return cfg_.d_in == other.cfg_.d_in && cfg_.d_out == other.cfg_.d_out &&
         cfg_.bias == other.cfg_.bias && cfg_.hidden == other.cfg_.hidden &&
         flatten() == other.flatten();
}

EmbeddingBatch encode(const Matrix& features, std::span<const int> class_ids,
                      const EncoderParams& params) {
  if (class_ids.size() != features.rows()) {
    throw std::invalid_argument("encode: label count differs from feature rows");
  }
  Forward f = run_forward(features, params);
  for (std::size_t r = 0; r < f.projected.rows(); ++r) {
    for (double& v : f.projected.row(r)) v /= f.norms[r];
  }
  return {std::move(f.projected), std::vector<int>(class_ids.begin(), class_ids.end())};
}

EncoderParams encode_backward(const Matrix& features, const EncoderParams& params,
                              const Matrix& upstream_grad) {
  const Forward f = run_forward(features, params);
  const std::size_t m = features.rows();
  const std::size_t d_out = params.config().d_out;
  if (upstream_grad.rows() != m || upstream_grad.cols() != d_out) {
    throw std::invalid_argument("encode_backward: upstream gradient must be m x d_out");
  }

  // Through u -> u / |u|: J g = (g - (g.e) e) / |u|.
  Matrix grad_projected(m, d_out);
  for (std::size_t r = 0; r < m; ++r) {
    const auto u = f.projected.row(r);
    const auto g = upstream_grad.row(r);
    const double inv = 1.0 / f.norms[r];
    double radial = 0.0;
    for (std::size_t c = 0; c < d_out; ++c) radial += g[c] * u[c] * inv;
    auto out = grad_projected.row(r);
    for (std::size_t c = 0; c < d_out; ++c) out[c] = (g[c] - radial * u[c] * inv) * inv;
  }

  EncoderParams grads(params.config());
  auto& gl = grads.layers();
  const auto& pl = params.layers();
  const bool bias = params.config().bias;
  if (pl.size() == 1) {
    gl[0].weight = transpose_times(features, grad_projected);
    if (bias) gl[0].bias = column_sums(grad_projected);
    return grads;
  }

  gl[1].weight = transpose_times(f.hidden, grad_projected);
  if (bias) gl[1].bias = column_sums(grad_projected);

  const std::size_t h = params.config().hidden;
  Matrix grad_pre(m, h);
  for (std::size_t r = 0; r < m; ++r) {
    const auto g = grad_projected.row(r);
    const auto act = f.hidden.row(r);
    auto out = grad_pre.row(r);
    for (std::size_t t = 0; t < h; ++t) {
      const double back = Dot(g, pl[1].weight.row(t));
      out[t] = back * (1.0 - act[t] * act[t]);
    }
  }
  gl[0].weight = transpose_times(features, grad_pre);
  if (bias) gl[0].bias = column_sums(grad_pre);
  return grads;
}

AdamState AdamState::zeros(std::size_t n, double lr, double weight_decay) {
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.lr = lr;
  s.weight_decay = weight_decay;
  return s;
}

AdamUpdate adam_step(std::span<const double> params, std::span<const double> grads,
                     AdamState state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw std::invalid_argument("adam_step: shape mismatch between params, grads and moments");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  std::vector<double> out(params.begin(), params.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i] + state.weight_decay * params[i];
    double& m1 = state.first_moment[i];
    double& m2 = state.second_moment[i];
    m1 = state.beta1 * m1 + (1.0 - state.beta1) * g;
    m2 = state.beta2 * m2 + (1.0 - state.beta2) * g * g;
    const double m_hat = m1 / c1;
    const double v_hat = m2 / c2;
    out[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  return {std::move(out), std::move(state)};
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  const auto& cfg = params.config();
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(cfg.d_in));
  put_u32(os, static_cast<std::uint32_t>(cfg.d_out));
  put_u32(os, (cfg.bias ? 1u : 0u) | (static_cast<std::uint32_t>(cfg.hidden) << 8));
  for (double v : params.flatten()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(b.data(), 8);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw std::runtime_error("not an encoder checkpoint: " + path.string());
  EncoderConfig cfg;
  cfg.d_in = get_u32(is);
  cfg.d_out = get_u32(is);
  const std::uint32_t flags = get_u32(is);
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path.string());
  cfg.bias = (flags & 1u) != 0;
  cfg.hidden = flags >> 8;
  EncoderParams params(cfg);
  std::vector<double> flat(params.num_params());
  for (double& v : flat) {
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  if (!is) throw std::runtime_error("truncated checkpoint body: " + path.string());
  if (is.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
  }
  params.assign(flat);
  return params;
}

}  // namespace ranksmooth
