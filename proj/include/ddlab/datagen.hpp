#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ddlab/common.hpp"
#include "ddlab/rng.hpp"

namespace ddlab {

// Parameters of the synthetic latent-linear data source: each sample is a
// random latent vector pushed through a fixed projection plus unit Gaussian
// noise, x = P z + e with z ~ N(0, I_d) and e ~ N(0, I_n).
struct DataSpec {
  std::int64_t latent_dim = 20;  // d, dimension of the generative factors
  std::int64_t n_features = 50;  // n, observed dimension
  std::int64_t n_train = 5000;
  std::int64_t n_test = 10000;
  double snr = 10.0;  // target E||Pz|| / E||e||
  std::uint64_t seed = 0;

  void validate() const {
    if (latent_dim < 1) throw std::invalid_argument("DataSpec: latent_dim must be >= 1");
    if (n_features < latent_dim)
      throw std::invalid_argument("DataSpec: n_features must be >= latent_dim");
    if (n_train < 1) throw std::invalid_argument("DataSpec: n_train must be >= 1");
    if (n_test < 1) throw std::invalid_argument("DataSpec: n_test must be >= 1");
    if (!(snr > 0.0)) throw std::invalid_argument("DataSpec: snr must be positive");
  }

  bool operator==(const DataSpec&) const = default;
};

inline DataSpec default_ae_data() { return DataSpec{}; }

inline DataSpec default_linear_ae_data() {
  DataSpec spec;
  spec.latent_dim = 10;
  spec.n_features = 25;
  spec.n_train = 5000;
  spec.n_test = 1000;
  spec.snr = 10.0;
  return spec;
}

// Variance r of each projection entry such that E||Pz||/||e|| hits the target
// snr: with z and e unit Gaussian, E||Pz||^2 = n*d*r and E||e||^2 = n, so
// r = snr^2 / d.
inline double noise_scale(double snr, std::int64_t latent_dim) {
  if (!(snr > 0.0)) throw std::invalid_argument("noise_scale: snr must be positive");
  if (latent_dim < 1) throw std::invalid_argument("noise_scale: latent_dim must be >= 1");
  return snr * snr / static_cast<double>(latent_dim);
}

struct Dataset {
  DataSpec spec;
  Matrix projection;                  // n_features x latent_dim
  double projection_variance = 0.0;   // r, variance of each projection entry
  Matrix x_train;                     // n_train x n_features
  Matrix x_test;                      // n_test x n_features
  Matrix train_signal;                // projection * z per train row, kept for measure_snr
};

// Draws the full dataset from one seeded stream. Stream order is fixed:
// projection entries row by row, then train rows (z then e per row), then
// test rows the same way. Train and test share the projection; they are
// fresh samples of one distribution, not two distributions.
inline Dataset generate_dataset(const DataSpec& spec) {
  spec.validate();
  const auto d = spec.latent_dim;
  const auto n = spec.n_features;

  Dataset ds;
  ds.spec = spec;
  ds.projection_variance = noise_scale(spec.snr, d);

  Rng rng(spec.seed);
  const double sd = std::sqrt(ds.projection_variance);

  ds.projection.resize(n, d);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < d; ++c) ds.projection(r, c) = sd * rng.gaussian();

  Vector z(d), noise(n);
  const auto fill = [&](Matrix& x, std::int64_t rows, Matrix* signal_out) {
    x.resize(rows, n);
    if (signal_out) signal_out->resize(rows, n);
    for (std::int64_t i = 0; i < rows; ++i) {
      for (std::int64_t k = 0; k < d; ++k) z[k] = rng.gaussian();
      for (std::int64_t k = 0; k < n; ++k) noise[k] = rng.gaussian();
      Vector signal = ds.projection * z;
      x.row(i) = (signal + noise).transpose();
      if (signal_out) signal_out->row(i) = signal.transpose();
    }
  };
  fill(ds.x_train, spec.n_train, &ds.train_signal);
  fill(ds.x_test, spec.n_test, nullptr);
  return ds;
}

// Empirical counterpart of the snr target: sum of signal norms over sum of
// noise norms across the train split.
inline double measure_snr(const Dataset& ds) {
  if (ds.train_signal.rows() != ds.x_train.rows())
    throw std::invalid_argument("measure_snr: dataset is missing its signal component");
  double signal = 0.0, noise = 0.0;
  for (std::int64_t i = 0; i < ds.x_train.rows(); ++i) {
    signal += ds.train_signal.row(i).norm();
    noise += (ds.x_train.row(i) - ds.train_signal.row(i)).norm();
  }
  return signal / noise;
}

// Binary dataset file: magic "DDL1", then latent_dim, n_features, n_train,
// n_test as int64, snr as float64, seed as uint64, then projection, x_train,
// x_test row-major as little-endian float64.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  put_magic(os, "DDL1");
  put_i64(os, ds.spec.latent_dim);
  put_i64(os, ds.spec.n_features);
  put_i64(os, ds.spec.n_train);
  put_i64(os, ds.spec.n_test);
  put_f64(os, ds.spec.snr);
  put_u64(os, ds.spec.seed);
  const auto dump = [&](const Matrix& m) {
    for (std::int64_t r = 0; r < m.rows(); ++r)
      for (std::int64_t c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
  };
  dump(ds.projection);
  dump(ds.x_train);
  dump(ds.x_test);
  if (!os) throw std::runtime_error("short write to " + path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  expect_magic(is, "DDL1", "dataset");
  DataSpec spec;
  spec.latent_dim = get_i64(is);
  spec.n_features = get_i64(is);
  spec.n_train = get_i64(is);
  spec.n_test = get_i64(is);
  spec.snr = get_f64(is);
  spec.seed = get_u64(is);
  spec.validate();

  Dataset ds;
  ds.spec = spec;
  ds.projection_variance = noise_scale(spec.snr, spec.latent_dim);
  const auto slurp = [&](Matrix& m, std::int64_t rows, std::int64_t cols) {
    m.resize(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) m(r, c) = get_f64(is);
  };
  slurp(ds.projection, spec.n_features, spec.latent_dim);
  slurp(ds.x_train, spec.n_train, spec.n_features);
  slurp(ds.x_test, spec.n_test, spec.n_features);
  if (is.get() != std::char_traits<char>::eof())
    throw std::runtime_error("trailing bytes in " + path.string());
  // The signal component is not stored; replay the generator to rebuild it.
  ds.train_signal = generate_dataset(spec).train_signal;
  return ds;
}

}  // namespace ddlab
