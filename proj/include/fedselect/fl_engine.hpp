/*
 * Copyright 2026 The fedselect Authors
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

// Desk-scale FedSGD: synthetic data, Dirichlet non-IID partition, local
// gradients for a softmax classifier (linear or one hidden layer), static
// symmetric quantization and the global SGD step.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedselect/common.hpp"

namespace fedselect::fl {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Shard {
  ClientId owner = 0;
  std::vector<std::size_t> sample_indices;

  friend bool operator==(const Shard&, const Shard&) = default;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Class-conditional Gaussians: class c has mean kSeparation * u_c with the
/// u_c orthonormal when num_classes <= dim (random unit vectors otherwise)
/// and identity covariance. Labels are balanced, then shuffled.
inline Dataset generate_synthetic_dataset(std::size_t num_classes, std::size_t dim, std::size_t n_samples,
                                          std::uint64_t seed) {
  constexpr double kSeparation = 2.0;
  if (num_classes < 2) throw DomainError("num_classes must be >= 2");
  if (dim < 2) throw DomainError("dim must be >= 2");
  if (n_samples < num_classes) throw DomainError("n_samples must be >= num_classes");

  std::mt19937_64 rng(derive_seed(seed, 0x5D47A));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<double> u(dim);
    for (double& x : u) x = normal(rng);
    if (c < dim) {
      for (const auto& prev : means) {  // Gram-Schmidt against earlier directions
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += u[k] * prev[k] / kSeparation;
        for (std::size_t k = 0; k < dim; ++k) u[k] -= dot * prev[k] / kSeparation;
      }
    }
    const double norm = l2_norm(u);
    for (double& x : u) x *= kSeparation / norm;
    means.push_back(std::move(u));
  }

  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<int>(i % num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset ds;
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.labels = std::move(labels);
  ds.features.resize(n_samples * dim);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto& mu = means[static_cast<std::size_t>(ds.labels[i])];
    for (std::size_t k = 0; k < dim; ++k) ds.features[i * dim + k] = mu[k] + normal(rng);
  }
  return ds;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.dim = ds.dim;
  out.num_classes = ds.num_classes;
  out.labels.reserve(indices.size());
  out.features.reserve(indices.size() * ds.dim);
  for (std::size_t idx : indices) {
    out.labels.push_back(ds.labels[idx]);
    auto r = ds.row(idx);
    out.features.insert(out.features.end(), r.begin(), r.end());
  }
  return out;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Stratified split; each class keeps at least one sample on each side when
/// it has two or more.
inline TrainTestSplit split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw DomainError("test_fraction must be in (0, 1)");
  std::mt19937_64 rng(derive_seed(seed, 0x5B117));
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    else n_test = 0;
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

/// Per class, client proportions ~ Dirichlet(alpha); the class's shuffled
/// samples are cut at the rounded cumulative proportions. Empty shards are
/// then repaired by moving one sample from the largest shard.
inline std::vector<Shard> dirichlet_partition(const Dataset& ds, std::size_t n_clients, double alpha,
                                              std::uint64_t seed) {
  if (n_clients < 1) throw DomainError("n_clients must be >= 1");
  if (!(alpha > 0.0)) throw DomainError("Dirichlet alpha must be > 0");
  if (n_clients > ds.size()) throw DomainError("more clients than samples");

  std::mt19937_64 rng(derive_seed(seed, 0xD1E1C));
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::vector<Shard> shards(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) shards[c].owner = c;

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<double> weights(n_clients);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (double& w : weights) total += (w = gamma(rng));
    if (!(total > 0.0)) {  // every draw underflowed
      std::fill(weights.begin(), weights.end(), 1.0);
      total = static_cast<double>(n_clients);
    }
    double cumulative = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      cumulative += weights[k];
      std::size_t end = k + 1 == n_clients
                            ? members.size()
                            : static_cast<std::size_t>(std::llround(cumulative / total * static_cast<double>(members.size())));
      end = std::clamp(end, start, members.size());
      shards[k].sample_indices.insert(shards[k].sample_indices.end(), members.begin() + static_cast<std::ptrdiff_t>(start),
                                      members.begin() + static_cast<std::ptrdiff_t>(end));
      start = end;
    }
  }

  for (auto& shard : shards) {
    if (!shard.sample_indices.empty()) continue;
    auto largest = std::max_element(shards.begin(), shards.end(), [](const Shard& a, const Shard& b) {
      return a.sample_indices.size() < b.sample_indices.size();
    });
    shard.sample_indices.push_back(largest->sample_indices.back());
    largest->sample_indices.pop_back();
  }
  for (auto& shard : shards) std::sort(shard.sample_indices.begin(), shard.sample_indices.end());
  return shards;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  os << "index,label";
  for (std::size_t k = 0; k < ds.dim; ++k) os << ",f" << k;
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << i << ',' << ds.labels[i];
    for (double x : ds.row(i)) os << ',' << x;
    os << '\n';
  }
}

inline void write_shards_csv(std::ostream& os, std::span<const Shard> shards) {
  os << "client,sample_index\n";
  for (const auto& s : shards)
    for (std::size_t idx : s.sample_indices) os << s.owner << ',' << idx << '\n';
}

enum class Architecture { logistic, mlp };

inline std::string to_string(Architecture a) { return a == Architecture::logistic ? "logistic" : "mlp"; }

/// Softmax classifier. Parameter layout:
///   logistic: W[classes x dim], b[classes]
///   mlp:      W1[hidden x dim], b1[hidden], W2[classes x hidden], b2[classes], tanh hidden units
struct Model {
  Architecture architecture = Architecture::logistic;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden = 0;
  double l2 = 0.0;  // objective adds l2/2 * ||theta||^2
  std::vector<double> parameters;

  static std::size_t parameter_count(Architecture arch, std::size_t dim, std::size_t classes, std::size_t hidden) {
    if (arch == Architecture::logistic) return classes * (dim + 1);
    return hidden * (dim + 1) + classes * (hidden + 1);
  }

  static Model logistic(std::size_t dim, std::size_t classes, double l2 = 0.0) {
    Model m;
    m.architecture = Architecture::logistic;
    m.dim = dim;
    m.num_classes = classes;
    m.l2 = l2;
    m.parameters.assign(parameter_count(m.architecture, dim, classes, 0), 0.0);
    return m;
  }

  static Model mlp(std::size_t dim, std::size_t classes, std::size_t hidden, std::uint64_t seed, double l2 = 0.0) {
    if (hidden < 1) throw DomainError("mlp needs at least one hidden unit");
    Model m;
    m.architecture = Architecture::mlp;
    m.dim = dim;
    m.num_classes = classes;
    m.hidden = hidden;
    m.l2 = l2;
    m.parameters.assign(parameter_count(m.architecture, dim, classes, hidden), 0.0);
    std::mt19937_64 rng(derive_seed(seed, 0x1417));
    std::normal_distribution<double> w1(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    std::normal_distribution<double> w2(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
    for (std::size_t i = 0; i < hidden * dim; ++i) m.parameters[i] = w1(rng);
    const std::size_t w2_off = hidden * (dim + 1);
    for (std::size_t i = 0; i < classes * hidden; ++i) m.parameters[w2_off + i] = w2(rng);
    return m;
  }

  std::size_t size() const { return parameters.size(); }

  friend bool operator==(const Model&, const Model&) = default;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

namespace detail {

// Returns -log softmax(logits)[label] and overwrites logits with softmax - onehot.
inline double softmax_nll_and_delta(std::vector<double>& logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) z += std::exp(v - mx);
  const double log_z = mx + std::log(z);
  const double nll = log_z - logits[static_cast<std::size_t>(label)];
  for (double& v : logits) v = std::exp(v - log_z);
  logits[static_cast<std::size_t>(label)] -= 1.0;
  return nll;
}

struct Forward {
  std::vector<double> hidden;  // tanh activations (mlp only)
  std::vector<double> logits;
};

inline Forward forward(const Model& m, std::span<const double> x) {
  Forward f;
  const auto& p = m.parameters;
  if (m.architecture == Architecture::logistic) {
    f.logits.assign(m.num_classes, 0.0);
    const std::size_t b_off = m.num_classes * m.dim;
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      double s = p[b_off + c];
      for (std::size_t k = 0; k < m.dim; ++k) s += p[c * m.dim + k] * x[k];
      f.logits[c] = s;
    }
    return f;
  }
  const std::size_t b1_off = m.hidden * m.dim;
  const std::size_t w2_off = b1_off + m.hidden;
  const std::size_t b2_off = w2_off + m.num_classes * m.hidden;
  f.hidden.assign(m.hidden, 0.0);
  for (std::size_t h = 0; h < m.hidden; ++h) {
    double s = p[b1_off + h];
    for (std::size_t k = 0; k < m.dim; ++k) s += p[h * m.dim + k] * x[k];
    f.hidden[h] = std::tanh(s);
  }
  f.logits.assign(m.num_classes, 0.0);
  for (std::size_t c = 0; c < m.num_classes; ++c) {
    double s = p[b2_off + c];
    for (std::size_t h = 0; h < m.hidden; ++h) s += p[w2_off + c * m.hidden + h] * f.hidden[h];
    f.logits[c] = s;
  }
  return f;
}

inline void accumulate_gradient(const Model& m, std::span<const double> x, const Forward& f,
                                std::span<const double> delta, std::vector<double>& g) {
  const auto& p = m.parameters;
  if (m.architecture == Architecture::logistic) {
    const std::size_t b_off = m.num_classes * m.dim;
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      for (std::size_t k = 0; k < m.dim; ++k) g[c * m.dim + k] += delta[c] * x[k];
      g[b_off + c] += delta[c];
    }
    return;
  }
  const std::size_t b1_off = m.hidden * m.dim;
  const std::size_t w2_off = b1_off + m.hidden;
  const std::size_t b2_off = w2_off + m.num_classes * m.hidden;
  for (std::size_t c = 0; c < m.num_classes; ++c) {
    for (std::size_t h = 0; h < m.hidden; ++h) g[w2_off + c * m.hidden + h] += delta[c] * f.hidden[h];
    g[b2_off + c] += delta[c];
  }
  for (std::size_t h = 0; h < m.hidden; ++h) {
    double back = 0.0;
    for (std::size_t c = 0; c < m.num_classes; ++c) back += delta[c] * p[w2_off + c * m.hidden + h];
    back *= 1.0 - f.hidden[h] * f.hidden[h];
    for (std::size_t k = 0; k < m.dim; ++k) g[h * m.dim + k] += back * x[k];
    g[b1_off + h] += back;
  }
}

inline double regulariser(const Model& m) {
  if (m.l2 == 0.0) return 0.0;
  double s = 0.0;
  for (double v : m.parameters) s += v * v;
  return 0.5 * m.l2 * s;
}

}  // namespace detail

/// Mean negative log likelihood (plus the L2 term) over `indices` and its gradient.
inline LossGradient loss_and_gradient(const Model& m, const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DomainError("loss over an empty sample set");
  LossGradient out;
  out.gradient.assign(m.size(), 0.0);
  double total = 0.0;
  for (std::size_t idx : indices) {
    auto x = ds.row(idx);
    auto f = detail::forward(m, x);
    total += detail::softmax_nll_and_delta(f.logits, ds.labels[idx]);
    detail::accumulate_gradient(m, x, f, f.logits, out.gradient);
  }
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  for (double& g : out.gradient) g *= inv_n;
  if (m.l2 != 0.0)
    for (std::size_t i = 0; i < m.size(); ++i) out.gradient[i] += m.l2 * m.parameters[i];
  out.loss = total * inv_n + detail::regulariser(m);
  return out;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline LossGradient loss_and_gradient(const Model& m, const Dataset& ds) {
  return loss_and_gradient(m, ds, all_indices(ds));
}

/// Unregularised per-sample NLL.
inline std::vector<double> per_sample_losses(const Model& m, const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    auto f = detail::forward(m, ds.row(idx));
    out.push_back(detail::softmax_nll_and_delta(f.logits, ds.labels[idx]));
  }
  return out;
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline Evaluation evaluate(const Model& m, const Dataset& ds) {
  if (ds.size() == 0) throw DomainError("evaluation on an empty dataset");
  Evaluation ev;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto f = detail::forward(m, ds.row(i));
    const auto pred = static_cast<int>(std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin());
    if (pred == ds.labels[i]) ++correct;
    ev.loss += detail::softmax_nll_and_delta(f.logits, ds.labels[i]);
  }
  ev.loss = ev.loss / static_cast<double>(ds.size()) + detail::regulariser(m);
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return ev;
}

struct GradientReport {
  std::vector<double> gradient;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t sample_count = 0;
};

/// Stochastic gradient of the mean NLL over a seeded batch drawn without
/// replacement. A batch at least as large as the shard uses the whole shard.
inline std::vector<std::size_t> sample_batch(const Shard& shard, std::size_t batch_size, std::uint64_t seed) {
  if (shard.sample_indices.empty()) throw DomainError("cannot sample from an empty shard");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  std::vector<std::size_t> batch = shard.sample_indices;
  if (batch_size < batch.size()) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, batch.size() - 1);
      std::swap(batch[i], batch[pick(rng)]);
    }
    batch.resize(batch_size);
  }
  return batch;
}

inline GradientReport local_gradient(const Model& m, const Dataset& ds, const Shard& shard, std::size_t batch_size,
                                     std::uint64_t seed) {
  const auto batch = sample_batch(shard, batch_size, seed);
  auto lg = loss_and_gradient(m, ds, batch);
  if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite local loss for client " + std::to_string(shard.owner));
  GradientReport r;
  r.loss = lg.loss;
  r.grad_norm = l2_norm(lg.gradient);
  r.gradient = std::move(lg.gradient);
  r.sample_count = batch.size();
  return r;
}

/// Bits of the scale field that travels with every quantized payload.
inline constexpr std::uint64_t kScaleOverheadBits = 64;

struct QuantizedPayload {
  std::vector<std::int8_t> codes;
  double scale = 1.0;
  int bit_width = 8;

  std::size_t length() const { return codes.size(); }
  std::uint64_t payload_bits() const {
    return static_cast<std::uint64_t>(codes.size()) * static_cast<std::uint64_t>(bit_width) + kScaleOverheadBits;
  }

  friend bool operator==(const QuantizedPayload&, const QuantizedPayload&) = default;
};

/// Bits for an unquantized float32 payload of `n` values (no side fields).
inline constexpr std::uint64_t float32_payload_bits(std::size_t n) { return static_cast<std::uint64_t>(n) * 32; }

inline int max_code(int bits) { return (1 << (bits - 1)) - 1; }

/// Symmetric linear quantizer with an externally fixed step. Codes are
/// round-half-away-from-zero(g / scale) clamped to [-qmax, qmax].
inline QuantizedPayload quantize_with_scale(std::span<const double> gradient, double scale, int bits = 8) {
  if (bits < 2 || bits > 8) throw DomainError("bit width must be in [2, 8]");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("quantization scale must be positive");
  const double qmax = max_code(bits);
  QuantizedPayload q;
  q.scale = scale;
  q.bit_width = bits;
  q.codes.reserve(gradient.size());
  for (double g : gradient) {
    if (!std::isfinite(g)) throw DomainError("cannot quantize a non-finite gradient");
    const double c = std::clamp(std::round(g / scale), -qmax, qmax);
    q.codes.push_back(static_cast<std::int8_t>(c));
  }
  return q;
}

/// Scale is max|g| / qmax (1 for an all-zero gradient).
inline double quantization_scale(std::span<const double> gradient, int bits = 8) {
  double mx = 0.0;
  for (double g : gradient) mx = std::max(mx, std::abs(g));
  return mx > 0.0 ? mx / max_code(bits) : 1.0;
}

inline QuantizedPayload quantize(std::span<const double> gradient, int bits = 8) {
  return quantize_with_scale(gradient, quantization_scale(gradient, bits), bits);
}

inline std::vector<double> dequantize(const QuantizedPayload& q) {
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(q.codes[i]) * q.scale;
  return out;
}

/// theta - learning_rate * sum(gradients).
inline Model global_update(const Model& model, std::span<const std::vector<double>> gradients, double learning_rate) {
  Model next = model;
  if (gradients.empty()) return next;
  std::vector<double> total(model.size(), 0.0);
  for (const auto& g : gradients) {
    if (g.size() != model.size())
      throw DomainError("gradient length " + std::to_string(g.size()) + " != parameter count " +
                        std::to_string(model.size()));
    for (std::size_t i = 0; i < g.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < total.size(); ++i) next.parameters[i] -= learning_rate * total[i];
  return next;
}

}  // namespace fedselect::fl
