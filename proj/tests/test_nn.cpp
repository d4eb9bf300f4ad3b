#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ddlab/nn.hpp"
#include "test_util.hpp"

using namespace ddlab;

namespace {

// Closed form for the symmetric n -> h -> l -> h -> n family.
std::int64_t symmetric_params(std::int64_t n, std::int64_t h, std::int64_t l) {
  return 2 * n * h + 2 * h * l + 2 * h + l + n;
}

double loss_at(Model& m, const Matrix& batch) { return mse_loss(forward(m, batch), batch); }

// Central finite differences against backward, with a small floor in the
// denominator so exactly-zero gradients (clipped ReLU units) compare cleanly.
double max_rel_grad_error(Model& m, const Matrix& batch) {
  ForwardCache cache;
  forward(m, batch, cache);
  const Gradients grads = backward(m, cache, batch);

  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto probe = [&](double& theta, double analytic) {
      const double saved = theta;
      theta = saved + step;
      const double up = loss_at(m, batch);
      theta = saved - step;
      const double down = loss_at(m, batch);
      theta = saved;
      const double fd = (up - down) / (2.0 * step);
      const double err =
          std::abs(analytic - fd) / std::max({1e-4, std::abs(analytic), std::abs(fd)});
      worst = std::max(worst, err);
    };
    for (std::int64_t r = 0; r < m.layers[k].weight.rows(); ++r)
      for (std::int64_t c = 0; c < m.layers[k].weight.cols(); ++c)
        probe(m.layers[k].weight(r, c), grads.weight[k](r, c));
    for (std::int64_t r = 0; r < m.layers[k].bias.size(); ++r)
      probe(m.layers[k].bias[r], grads.bias[k][r]);
  }
  return worst;
}

// Smallest |pre-activation| across the cache; finite differences are only
// trustworthy when no ReLU unit sits within the probe step of its kink.
double min_abs_preactivation(const Model& m, const Matrix& batch) {
  ForwardCache cache;
  forward(m, batch, cache);
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& pre : cache.pre) lo = std::min(lo, pre.array().abs().minCoeff());
  return lo;
}

}  // namespace

TEST_CASE("param_count matches the published and hand counts") {
  CHECK(param_count(linear_ae_arch()) == 29445);
  CHECK(param_count(nonlinear_arch(50, 28, 20)) == 4046);
  CHECK(param_count(nonlinear_arch(1, 1, 1)) == 8);
}

TEST_CASE("param_count equals closed form and realized scalar count") {
  Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<std::int64_t>(rng.below(40)) + 1;
    const auto h = static_cast<std::int64_t>(rng.below(40)) + 1;
    const auto l = static_cast<std::int64_t>(rng.below(40)) + 1;
    const ArchSpec arch = nonlinear_arch(n, h, l);
    const auto expected = symmetric_params(n, h, l);
    REQUIRE(param_count(arch) == expected);
    REQUIRE(param_count(init_model(arch, 1)) == expected);
  }
}

TEST_CASE("init stays within the fan-in bound and is deterministic") {
  const ArchSpec arch = nonlinear_arch(6, 9, 3);
  const Model a = init_model(arch, 55);
  const Model b = init_model(arch, 55);
  const Model c = init_model(arch, 56);
  const auto dims = arch.dims();
  bool differs = false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k]));
    REQUIRE(a.layers[k].weight.array().abs().maxCoeff() <= bound);
    REQUIRE(a.layers[k].bias.array().abs().maxCoeff() <= bound);
    REQUIRE(a.layers[k].weight == b.layers[k].weight);
    REQUIRE(a.layers[k].bias == b.layers[k].bias);
    differs = differs || a.layers[k].weight != c.layers[k].weight;
  }
  CHECK(differs);
}

TEST_CASE("init model for the wide default slice has 28470 scalars") {
  CHECK(param_count(init_model(nonlinear_arch(50, 200, 20), 0)) == 28470);
}

TEST_CASE("forward with zero parameters reconstructs zeros") {
  Model m = init_model(nonlinear_arch(4, 5, 2), 1);
  for (auto& layer : m.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  Rng rng(3);
  Matrix batch(3, 4);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) batch(r, c) = rng.gaussian();
  CHECK(forward(m, batch).array().abs().maxCoeff() == 0.0);
}

TEST_CASE("identity activation composes to one affine map") {
  ArchSpec arch;
  arch.n_features = 5;
  arch.encoder_hidden = {7, 4};
  arch.latent = 3;
  arch.decoder_hidden = {6};
  arch.activation = ActivationKind::identity;
  const Model m = init_model(arch, 8);

  // Fold the layers into a single (A, b) independently of forward().
  Matrix a = Matrix::Identity(5, 5);
  Vector b = Vector::Zero(5);
  for (const auto& layer : m.layers) {
    b = layer.weight * b + layer.bias;
    a = layer.weight * a;
  }
  Rng rng(12);
  Matrix batch(4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) batch(r, c) = rng.gaussian();
  const Matrix out = forward(m, batch);
  const Matrix oracle = (batch * a.transpose()).rowwise() + b.transpose();
  CHECK((out - oracle).array().abs().maxCoeff() < 1e-12);
}

TEST_CASE("relu clips the hand-traced negative path") {
  Model m = init_model(nonlinear_arch(1, 1, 1), 0);
  for (auto& layer : m.layers) {
    layer.weight.setOnes();
    layer.bias.setZero();
  }
  Matrix batch(1, 1);
  batch(0, 0) = -1.0;
  CHECK(forward(m, batch)(0, 0) == 0.0);
  batch(0, 0) = 2.0;  // positive input passes straight through unit weights
  CHECK(forward(m, batch)(0, 0) == 2.0);
}

TEST_CASE("forward rejects a batch of the wrong width") {
  const Model m = init_model(nonlinear_arch(4, 3, 2), 0);
  CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 5)), std::invalid_argument);
}

TEST_CASE("mse_loss arithmetic") {
  Matrix a(1, 2), b(1, 2);
  a << 1.0, -3.0;
  b << 0.0, 0.0;
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(a, b) == 5.0);
  Matrix ones = Matrix::Ones(3, 4);
  CHECK(mse_loss(2.0 * ones, ones) == 1.0);
  CHECK_THROWS_AS(mse_loss(a, Matrix::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("backward matches finite differences on small models") {
  Rng rng(101);
  for (int i = 0; i < 8; ++i) {
    const auto n = static_cast<std::int64_t>(rng.below(6)) + 1;
    const auto h = static_cast<std::int64_t>(rng.below(8)) + 1;
    const auto l = static_cast<std::int64_t>(rng.below(8)) + 1;
    ArchSpec arch = nonlinear_arch(std::max<std::int64_t>(n, 1), h, l);
    arch.activation = i % 2 == 0 ? ActivationKind::relu : ActivationKind::identity;
    const auto batch_rows = static_cast<std::int64_t>(rng.below(4)) + 1;

    for (std::uint64_t seed = 0;; ++seed) {
      Model m = init_model(arch, 1000 + seed);
      Matrix batch(batch_rows, arch.n_features);
      Rng data_rng(2000 + seed);
      for (std::int64_t r = 0; r < batch_rows; ++r)
        for (std::int64_t c = 0; c < arch.n_features; ++c) batch(r, c) = data_rng.gaussian();
      if (arch.activation == ActivationKind::relu && min_abs_preactivation(m, batch) < 1e-3)
        continue;
      REQUIRE(max_rel_grad_error(m, batch) < 1e-5);
      break;
    }
  }
}

TEST_CASE("gradients vanish at an exact reconstruction") {
  // Identity weights end to end reproduce the input exactly, so the quadratic
  // loss sits at its minimum and every gradient is zero.
  ArchSpec arch;
  arch.n_features = 3;
  arch.latent = 3;
  arch.activation = ActivationKind::identity;
  Model m = init_model(arch, 0);
  for (auto& layer : m.layers) {
    layer.weight = Matrix::Identity(3, 3);
    layer.bias.setZero();
  }
  Matrix batch(2, 3);
  batch << 1.0, -2.0, 0.5, 3.0, 4.0, -1.0;
  ForwardCache cache;
  forward(m, batch, cache);
  const Gradients g = backward(m, cache, batch);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    CHECK(g.weight[k].array().abs().maxCoeff() == 0.0);
    CHECK(g.bias[k].array().abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("first-layer gradient matches the closed form through an identity tail") {
  // Arch 4 -> 4 -> 4 (identity) with the second layer frozen to the identity
  // map reduces to a single affine layer, whose weight gradient for one
  // sample x is (2/n) (W x + b - x) x^T.
  const std::int64_t n = 4;
  ArchSpec arch;
  arch.n_features = n;
  arch.latent = n;
  arch.activation = ActivationKind::identity;
  Model m = init_model(arch, 21);
  m.layers[1].weight = Matrix::Identity(n, n);
  m.layers[1].bias.setZero();

  Rng rng(6);
  Matrix batch(1, n);
  for (std::int64_t c = 0; c < n; ++c) batch(0, c) = rng.gaussian();
  ForwardCache cache;
  forward(m, batch, cache);
  const Gradients g = backward(m, cache, batch);

  const Vector x = batch.row(0).transpose();
  const Vector residual = m.layers[0].weight * x + m.layers[0].bias - x;
  const Matrix oracle = (2.0 / static_cast<double>(n)) * residual * x.transpose();
  CHECK((g.weight[0] - oracle).array().abs().maxCoeff() < 1e-14);
}

TEST_CASE("adam first step moves by about lr") {
  ArchSpec arch = nonlinear_arch(1, 1, 1);
  Model m = init_model(arch, 1);
  const double theta0 = m.layers[0].weight(0, 0);
  AdamState state = AdamState::for_model(m);
  Gradients g;
  g.weight.resize(m.layers.size());
  g.bias.resize(m.layers.size());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    g.weight[k] = Matrix::Zero(1, 1);
    g.bias[k] = Vector::Zero(1);
  }
  g.weight[0](0, 0) = 0.37;
  adam_step(m, g, state);
  CHECK(std::abs(m.layers[0].weight(0, 0) - (theta0 - 0.001)) < 1e-6);
  CHECK(state.step == 1);
}

TEST_CASE("zero gradients leave parameters untouched") {
  Model m = init_model(nonlinear_arch(2, 3, 1), 4);
  const Model before = m;
  AdamState state = AdamState::for_model(m);
  Gradients g;
  g.weight.resize(m.layers.size());
  g.bias.resize(m.layers.size());
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    g.weight[k] = Matrix::Zero(m.layers[k].weight.rows(), m.layers[k].weight.cols());
    g.bias[k] = Vector::Zero(m.layers[k].bias.size());
  }
  for (int i = 0; i < 25; ++i) adam_step(m, g, state);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    CHECK(m.layers[k].weight == before.layers[k].weight);
    CHECK(m.layers[k].bias == before.layers[k].bias);
  }
}

TEST_CASE("adam descends the scalar quadratic like the hand-rolled oracle") {
  // Every parameter starts at 1 and receives gradient 2*theta, i.e. each
  // independently minimizes theta^2; compare against a plain scalar Adam.
  ArchSpec arch = nonlinear_arch(1, 1, 1);
  Model m = init_model(arch, 0);
  for (auto& layer : m.layers) {
    layer.weight.setOnes();
    layer.bias.setOnes();
  }
  AdamState state = AdamState::for_model(m, AdamHyper{.lr = 0.1});

  double theta = 1.0, m1 = 0.0, v1 = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
  for (int t = 1; t <= 10; ++t) {
    Gradients g;
    g.weight.resize(m.layers.size());
    g.bias.resize(m.layers.size());
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      g.weight[k] = 2.0 * m.layers[k].weight;
      g.bias[k] = 2.0 * m.layers[k].bias;
    }
    const double prev = theta;
    adam_step(m, g, state);

    const double grad = 2.0 * prev;
    m1 = b1 * m1 + (1.0 - b1) * grad;
    v1 = b2 * v1 + (1.0 - b2) * grad * grad;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    theta -= lr * (m1 / c1) / (std::sqrt(v1 / c2) + eps);

    REQUIRE(theta < prev);
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      REQUIRE(std::abs(m.layers[k].weight(0, 0) - theta) < 1e-14);
      REQUIRE(std::abs(m.layers[k].bias[0] - theta) < 1e-14);
    }
  }
}

TEST_CASE("model checkpoint round trip") {
  const auto dir = ddtest::scratch_dir("nn_checkpoint");
  ArchSpec arch;
  arch.n_features = 5;
  arch.encoder_hidden = {4, 3};
  arch.latent = 2;
  arch.decoder_hidden = {3, 4};
  arch.activation = ActivationKind::identity;
  const Model m = init_model(arch, 31);
  save_model(m, dir / "m.bin");
  const Model back = load_model(dir / "m.bin");
  REQUIRE(back.arch == m.arch);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    REQUIRE(back.layers[k].weight == m.layers[k].weight);
    REQUIRE(back.layers[k].bias == m.layers[k].bias);
  }

  auto bytes = ddtest::read_file(dir / "m.bin");
  bytes[1] = 'x';
  ddtest::write_file(dir / "bad.bin", bytes);
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), std::runtime_error);
}
