#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddlab/common.hpp"
#include "ddlab/rng.hpp"

namespace ddlab {

enum class ActivationKind : std::uint8_t { relu, identity };

inline std::string to_string(ActivationKind k) {
  return k == ActivationKind::relu ? "relu" : "identity";
}

inline ActivationKind activation_from_string(const std::string& s) {
  if (s == "relu") return ActivationKind::relu;
  if (s == "identity") return ActivationKind::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

// Autoencoder shape: n -> encoder_hidden... -> latent -> decoder_hidden... -> n.
// Hidden layers carry the activation; the latent and output layers are affine.
struct ArchSpec {
  std::int64_t n_features = 50;
  std::vector<std::int64_t> encoder_hidden;
  std::int64_t latent = 20;
  std::vector<std::int64_t> decoder_hidden;
  ActivationKind activation = ActivationKind::relu;

  void validate() const {
    if (n_features < 1) throw std::invalid_argument("ArchSpec: n_features must be >= 1");
    if (latent < 1) throw std::invalid_argument("ArchSpec: latent must be >= 1");
    for (auto w : encoder_hidden)
      if (w < 1) throw std::invalid_argument("ArchSpec: encoder widths must be >= 1");
    for (auto w : decoder_hidden)
      if (w < 1) throw std::invalid_argument("ArchSpec: decoder widths must be >= 1");
  }

  // Full width chain including input and output.
  std::vector<std::int64_t> dims() const {
    std::vector<std::int64_t> d;
    d.reserve(encoder_hidden.size() + decoder_hidden.size() + 3);
    d.push_back(n_features);
    d.insert(d.end(), encoder_hidden.begin(), encoder_hidden.end());
    d.push_back(latent);
    d.insert(d.end(), decoder_hidden.begin(), decoder_hidden.end());
    d.push_back(n_features);
    return d;
  }

  std::int64_t num_layers() const {
    return static_cast<std::int64_t>(encoder_hidden.size() + decoder_hidden.size()) + 2;
  }

  // Whether layer k (0-based, mapping dims[k] to dims[k+1]) applies the
  // activation. True only when the destination is a hidden layer.
  bool activated(std::int64_t k) const {
    if (activation == ActivationKind::identity) return false;
    const auto enc = static_cast<std::int64_t>(encoder_hidden.size());
    const auto dec = static_cast<std::int64_t>(decoder_hidden.size());
    return k < enc || (k > enc && k < enc + 1 + dec);
  }

  bool operator==(const ArchSpec&) const = default;
};

// Symmetric one-hidden-layer family: n -> h -> l -> h -> n with ReLU.
inline ArchSpec nonlinear_arch(std::int64_t n_features, std::int64_t hidden, std::int64_t latent) {
  ArchSpec a;
  a.n_features = n_features;
  a.encoder_hidden = {hidden};
  a.latent = latent;
  a.decoder_hidden = {hidden};
  a.activation = ActivationKind::relu;
  a.validate();
  return a;
}

// The fully linear family: 25 -> 100 -> 100 -> 20 -> 100 -> 100 -> 25,
// identity activation, 29445 trainable scalars.
inline ArchSpec linear_ae_arch() {
  ArchSpec a;
  a.n_features = 25;
  a.encoder_hidden = {100, 100};
  a.latent = 20;
  a.decoder_hidden = {100, 100};
  a.activation = ActivationKind::identity;
  return a;
}

inline std::int64_t param_count(const ArchSpec& arch) {
  arch.validate();
  const auto dims = arch.dims();
  std::int64_t total = 0;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) total += dims[k + 1] * dims[k] + dims[k + 1];
  return total;
}

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct Model {
  ArchSpec arch;
  std::vector<Layer> layers;
};

// Uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases.
// Fill order is the flattening order: layers in sequence, weights row-major,
// then bias, so a (arch, seed) pair pins every scalar.
inline Model init_model(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  Model m;
  m.arch = arch;
  Rng rng(seed);
  const auto dims = arch.dims();
  m.layers.resize(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const auto in = dims[k], out = dims[k + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer& layer = m.layers[k];
    layer.weight.resize(out, in);
    for (std::int64_t r = 0; r < out; ++r)
      for (std::int64_t c = 0; c < in; ++c)
        layer.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    layer.bias.resize(out);
    for (std::int64_t r = 0; r < out; ++r) layer.bias[r] = bound * (2.0 * rng.uniform() - 1.0);
  }
  return m;
}

inline std::int64_t param_count(const Model& m) {
  std::int64_t total = 0;
  for (const auto& layer : m.layers) total += layer.weight.size() + layer.bias.size();
  return total;
}

// Per-layer pre/post activations from one forward pass plus the input batch,
// everything backward needs. Buffers keep their allocation across calls with
// the same batch size.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre[k] = post[k-1] * W_k^T + b_k
  std::vector<Matrix> post;  // activation applied where the layer has one
};

inline const Matrix& forward(const Model& m, const Matrix& batch, ForwardCache& cache) {
  if (batch.cols() != m.arch.n_features)
    throw std::invalid_argument("forward: batch width does not match n_features");
  const auto L = static_cast<std::size_t>(m.arch.num_layers());
  cache.input = batch;
  cache.pre.resize(L);
  cache.post.resize(L);
  const Matrix* in = &cache.input;
  for (std::size_t k = 0; k < L; ++k) {
    const Layer& layer = m.layers[k];
    cache.pre[k].noalias() = (*in) * layer.weight.transpose();
    cache.pre[k].rowwise() += layer.bias.transpose();
    if (m.arch.activated(static_cast<std::int64_t>(k)))
      cache.post[k] = cache.pre[k].cwiseMax(0.0);
    else
      cache.post[k] = cache.pre[k];
    in = &cache.post[k];
  }
  return cache.post.back();
}

inline Matrix forward(const Model& m, const Matrix& batch) {
  ForwardCache cache;
  return forward(m, batch, cache);
}

inline double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mse_loss: shape mismatch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

// Exact gradient of mse_loss(forward(model, input), target) for every
// parameter. The ReLU subgradient at 0 is taken as 0.
inline void backward(const Model& m, const ForwardCache& cache, const Matrix& target,
                     Gradients& grads) {
  const auto L = static_cast<std::size_t>(m.arch.num_layers());
  if (cache.post.size() != L || cache.pre.size() != L)
    throw std::invalid_argument("backward: cache does not match model");
  if (target.rows() != cache.input.rows() || target.cols() != m.arch.n_features)
    throw std::invalid_argument("backward: target shape mismatch");
  grads.weight.resize(L);
  grads.bias.resize(L);

  const double scale = 2.0 / static_cast<double>(target.size());
  Matrix delta = scale * (cache.post.back() - target);  // dL/d(post[L-1])
  for (std::size_t k = L; k-- > 0;) {
    if (m.arch.activated(static_cast<std::int64_t>(k)))
      delta = delta.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
    const Matrix& in = k == 0 ? cache.input : cache.post[k - 1];
    grads.weight[k].noalias() = delta.transpose() * in;
    grads.bias[k] = delta.colwise().sum().transpose();
    if (k > 0) {
      Matrix next = delta * m.layers[k].weight;
      delta.swap(next);
    }
  }
}

inline Gradients backward(const Model& m, const ForwardCache& cache, const Matrix& target) {
  Gradients g;
  backward(m, cache, target, g);
  return g;
}

struct AdamHyper {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;
  AdamHyper hyper;

  static AdamState for_model(const Model& model, AdamHyper hyper = {}) {
    AdamState s;
    s.hyper = hyper;
    const auto L = model.layers.size();
    s.m_weight.resize(L);
    s.v_weight.resize(L);
    s.m_bias.resize(L);
    s.v_bias.resize(L);
    for (std::size_t k = 0; k < L; ++k) {
      s.m_weight[k] = Matrix::Zero(model.layers[k].weight.rows(), model.layers[k].weight.cols());
      s.v_weight[k] = s.m_weight[k];
      s.m_bias[k] = Vector::Zero(model.layers[k].bias.size());
      s.v_bias[k] = s.m_bias[k];
    }
    return s;
  }
};

// One Adam update with bias correction, in place. Elementwise, so the result
// does not depend on any parameter iteration order.
inline void adam_step(Model& model, const Gradients& grads, AdamState& state) {
  if (grads.weight.size() != model.layers.size())
    throw std::invalid_argument("adam_step: gradient/model layer mismatch");
  state.step += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const auto update = [&](auto& theta, const auto& g, auto& mom1, auto& mom2) {
    mom1 = h.beta1 * mom1 + (1.0 - h.beta1) * g;
    mom2.array() = h.beta2 * mom2.array() + (1.0 - h.beta2) * g.array().square();
    theta.array() -= h.lr * (mom1.array() / c1) / ((mom2.array() / c2).sqrt() + h.epsilon);
  };
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    update(model.layers[k].weight, grads.weight[k], state.m_weight[k], state.v_weight[k]);
    update(model.layers[k].bias, grads.bias[k], state.m_bias[k], state.v_bias[k]);
  }
}

// Checkpoint file: magic "DDM1", arch fields, then parameters in flattening
// order as little-endian float64.
inline void save_model(const Model& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  put_magic(os, "DDM1");
  put_i64(os, m.arch.n_features);
  put_i64(os, static_cast<std::int64_t>(m.arch.encoder_hidden.size()));
  for (auto w : m.arch.encoder_hidden) put_i64(os, w);
  put_i64(os, m.arch.latent);
  put_i64(os, static_cast<std::int64_t>(m.arch.decoder_hidden.size()));
  for (auto w : m.arch.decoder_hidden) put_i64(os, w);
  put_u64(os, m.arch.activation == ActivationKind::relu ? 0 : 1);
  for (const auto& layer : m.layers) {
    for (std::int64_t r = 0; r < layer.weight.rows(); ++r)
      for (std::int64_t c = 0; c < layer.weight.cols(); ++c) put_f64(os, layer.weight(r, c));
    for (std::int64_t r = 0; r < layer.bias.size(); ++r) put_f64(os, layer.bias[r]);
  }
  if (!os) throw std::runtime_error("short write to " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  expect_magic(is, "DDM1", "model checkpoint");
  ArchSpec arch;
  arch.n_features = get_i64(is);
  arch.encoder_hidden.resize(static_cast<std::size_t>(get_i64(is)));
  for (auto& w : arch.encoder_hidden) w = get_i64(is);
  arch.latent = get_i64(is);
  arch.decoder_hidden.resize(static_cast<std::size_t>(get_i64(is)));
  for (auto& w : arch.decoder_hidden) w = get_i64(is);
  arch.activation = get_u64(is) == 0 ? ActivationKind::relu : ActivationKind::identity;
  arch.validate();

  Model m;
  m.arch = arch;
  const auto dims = arch.dims();
  m.layers.resize(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Layer& layer = m.layers[k];
    layer.weight.resize(dims[k + 1], dims[k]);
    for (std::int64_t r = 0; r < layer.weight.rows(); ++r)
      for (std::int64_t c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get_f64(is);
    layer.bias.resize(dims[k + 1]);
    for (std::int64_t r = 0; r < layer.bias.size(); ++r) layer.bias[r] = get_f64(is);
  }
  if (is.get() != std::char_traits<char>::eof())
    throw std::runtime_error("trailing bytes in " + path.string());
  return m;
}

}  // namespace ddlab
