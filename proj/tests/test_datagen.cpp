#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddlab/datagen.hpp"
#include "test_util.hpp"

using namespace ddlab;

TEST_CASE("noise_scale matches the calibration formula") {
  CHECK(noise_scale(10.0, 20) == 5.0);
  CHECK(noise_scale(1.0, 1) == 1.0);
  CHECK(noise_scale(10.0, 10) == 10.0);
  CHECK_THROWS_AS(noise_scale(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(noise_scale(-1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(noise_scale(1.0, 0), std::invalid_argument);
}

TEST_CASE("noise_scale times latent_dim is snr squared") {
  for (double snr : {0.5, 1.0, 3.0, 10.0})
    for (std::int64_t d : {1, 2, 7, 20, 50})
      CHECK(noise_scale(snr, d) * static_cast<double>(d) == Catch::Approx(snr * snr).epsilon(1e-15));
}

TEST_CASE("spec validation rejects bad fields") {
  DataSpec spec;
  spec.latent_dim = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = DataSpec{};
  spec.n_features = spec.latent_dim - 1;  // fewer features than latents
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = DataSpec{};
  spec.n_train = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = DataSpec{};
  spec.snr = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("generated shapes follow the spec") {
  const Dataset ds = generate_dataset(default_ae_data());
  CHECK(ds.x_train.rows() == 5000);
  CHECK(ds.x_train.cols() == 50);
  CHECK(ds.x_test.rows() == 10000);
  CHECK(ds.x_test.cols() == 50);
  CHECK(ds.projection.rows() == 50);
  CHECK(ds.projection.cols() == 20);
  CHECK(ds.projection_variance == 5.0);
}

TEST_CASE("scalar dataset replays the generator stream") {
  // d = n = 1 makes the whole draw explicit: projection scalar, then per row
  // one latent and one noise value. With snr=10, d=1 the projection sd is 10.
  DataSpec spec;
  spec.latent_dim = 1;
  spec.n_features = 1;
  spec.n_train = 1;
  spec.n_test = 1;
  spec.snr = 10.0;
  spec.seed = 77;
  const Dataset ds = generate_dataset(spec);

  Rng replay(77);
  const double g1 = replay.gaussian();
  const double g2 = replay.gaussian();
  const double g3 = replay.gaussian();
  const double g4 = replay.gaussian();
  const double g5 = replay.gaussian();
  CHECK(ds.projection(0, 0) == 10.0 * g1);
  CHECK(ds.x_train(0, 0) == 10.0 * g1 * g2 + g3);
  CHECK(ds.x_test(0, 0) == 10.0 * g1 * g4 + g5);

  // With snr = sqrt(10) the projection sd is sqrt(10) itself.
  spec.snr = std::sqrt(10.0);
  const Dataset ds2 = generate_dataset(spec);
  Rng replay2(77);
  const double h1 = replay2.gaussian(), h2 = replay2.gaussian(), h3 = replay2.gaussian();
  CHECK(ds2.x_train(0, 0) == std::sqrt(10.0) * h1 * h2 + h3);
}

TEST_CASE("train rows consume the stream before test rows") {
  DataSpec spec;
  spec.latent_dim = 2;
  spec.n_features = 3;
  spec.n_train = 4;
  spec.n_test = 5;
  spec.snr = 2.0;
  spec.seed = 5;
  const Dataset ds = generate_dataset(spec);

  Rng replay(5);
  const double sd = std::sqrt(noise_scale(spec.snr, spec.latent_dim));
  Matrix proj(3, 2);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) proj(r, c) = sd * replay.gaussian();
  REQUIRE(proj == ds.projection);
  for (int i = 0; i < 4; ++i) {
    Vector z(2), noise(3);
    for (int k = 0; k < 2; ++k) z[k] = replay.gaussian();
    for (int k = 0; k < 3; ++k) noise[k] = replay.gaussian();
    const Vector row = proj * z + noise;
    for (int k = 0; k < 3; ++k) REQUIRE(ds.x_train(i, k) == row[k]);
  }
}

TEST_CASE("identical specs give bit-identical datasets") {
  DataSpec spec = default_ae_data();
  spec.n_train = 50;
  spec.n_test = 30;
  spec.seed = 123;
  const Dataset a = generate_dataset(spec);
  const Dataset b = generate_dataset(spec);
  CHECK(a.projection == b.projection);
  CHECK(a.x_train == b.x_train);
  CHECK(a.x_test == b.x_test);
  CHECK(measure_snr(a) == measure_snr(b));
}

TEST_CASE("measured snr concentrates near the target") {
  const Dataset table1 = generate_dataset(default_ae_data());
  const double snr1 = measure_snr(table1);
  CHECK(snr1 > 9.8);
  CHECK(snr1 < 10.2);

  DataSpec unit;
  unit.latent_dim = 50;
  unit.n_features = 50;
  unit.n_train = 10000;
  unit.n_test = 1;
  unit.snr = 1.0;
  unit.seed = 4;
  const double snr2 = measure_snr(generate_dataset(unit));
  CHECK(snr2 > 0.98);
  CHECK(snr2 < 1.02);
}

TEST_CASE("entry variance approaches snr^2 + 1") {
  const Dataset ds = generate_dataset(default_ae_data());
  const double n = static_cast<double>(ds.x_train.size());
  const double mean = ds.x_train.sum() / n;
  const double var = (ds.x_train.array() - mean).square().sum() / (n - 1.0);
  CHECK(var > 0.95 * 101.0);
  CHECK(var < 1.05 * 101.0);
}

TEST_CASE("dataset file round trip") {
  const auto dir = ddtest::scratch_dir("datagen_roundtrip");
  DataSpec spec = default_linear_ae_data();
  spec.n_train = 17;
  spec.n_test = 9;
  spec.seed = 99;
  const Dataset ds = generate_dataset(spec);
  save_dataset(ds, dir / "d.bin");
  const Dataset back = load_dataset(dir / "d.bin");
  CHECK(back.spec == ds.spec);
  CHECK(back.projection == ds.projection);
  CHECK(back.x_train == ds.x_train);
  CHECK(back.x_test == ds.x_test);
  CHECK(back.train_signal == ds.train_signal);
  CHECK(back.projection_variance == ds.projection_variance);
}

TEST_CASE("dataset loader rejects corrupt files") {
  const auto dir = ddtest::scratch_dir("datagen_corrupt");
  DataSpec spec = default_linear_ae_data();
  spec.n_train = 3;
  spec.n_test = 2;
  const Dataset ds = generate_dataset(spec);
  save_dataset(ds, dir / "d.bin");

  auto bytes = ddtest::read_file(dir / "d.bin");
  ddtest::write_file(dir / "trailing.bin", bytes + "x");
  CHECK_THROWS_AS(load_dataset(dir / "trailing.bin"), std::runtime_error);

  ddtest::write_file(dir / "truncated.bin", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_dataset(dir / "truncated.bin"), std::runtime_error);

  bytes[0] = 'X';
  ddtest::write_file(dir / "magic.bin", bytes);
  CHECK_THROWS_AS(load_dataset(dir / "magic.bin"), std::runtime_error);
}
