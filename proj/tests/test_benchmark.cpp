#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/benchmark.hpp"
#include "lfr/dataset.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lfr;
using namespace lfr::msd;

TEST_CASE("single bin multisine is a cosine at the target RMS") {
  MultisineSpec s;
  s.period = 100;
  s.bins = {5};
  s.rms = 2.0;
  s.seed = 3;
  const Vec u = generate_multisine(s, 100);
  CHECK(oracle::rms(u) == doctest::Approx(2.0).epsilon(1e-12));
  // cos(2 pi 5 k / 100 + phi) repeats every 20 samples and flips sign after 10
  for (Index k = 0; k < 80; ++k) CHECK(u(k + 20) == doctest::Approx(u(k)).epsilon(1e-9));
  for (Index k = 0; k < 90; ++k) CHECK(u(k + 10) == doctest::Approx(-u(k)).epsilon(1e-9));
  s.bins.clear();
  CHECK_THROWS_AS(generate_multisine(s, 10), ConfigError);
}

TEST_CASE("standard multisine") {
  const MultisineSpec s = MultisineSpec::standard(7);
  CHECK(s.bins.size() == 1666);
  const Vec u = generate_multisine(s, 2 * s.period);
  CHECK(oracle::rms(u.head(s.period)) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK((u.head(s.period) - u.tail(s.period)).lpNorm<Eigen::Infinity>() == 0.0);
  const auto mag = oracle::dft_magnitudes(u.head(s.period));
  const double peak = *std::max_element(mag.begin(), mag.end());
  int lines = 0;
  for (std::size_t b = 0; b < mag.size(); ++b) {
    const bool on = mag[b] > 1e-6 * peak;
    lines += on;
    if (on) CHECK(b % 3 == 0);
  }
  CHECK(lines == 1666);
  CHECK(generate_multisine(s, 50) == generate_multisine(MultisineSpec::standard(7), 50));
  CHECK(generate_multisine(s, 50) != generate_multisine(MultisineSpec::standard(8), 50));
}

TEST_CASE("generated data") {
  BenchmarkConfig c;
  c.seed = 2;
  const BenchmarkData d = generate_dataset(c);
  CHECK(d.est.size() == 20000);
  CHECK(d.val.size() == 10000);
  CHECK(d.test.size() == 10000);
  CHECK(std::abs(measured_snr_db(d.est) - 30.0) < 0.2);
  CHECK(d.est.meta.at("variant") == "a");
  // independent phases per split
  CHECK((d.est.u.topRows(100) - d.val.u.topRows(100)).norm() > 1.0);
  // repeatability
  const BenchmarkData again = generate_dataset(c);
  CHECK(again.est.y == d.est.y);

  // the injected noise is white
  const Vec e = d.est.y - d.est.y_clean;
  const double r0 = e.squaredNorm();
  const double bound = 3.0 / std::sqrt(static_cast<double>(e.size()));
  for (Index lag = 1; lag <= 20; ++lag) {
    const double r = e.head(e.size() - lag).dot(e.tail(e.size() - lag)) / r0;
    CHECK(std::abs(r) < bound);
  }
}

TEST_CASE("saturated input RMS") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Vec u = generate_multisine(MultisineSpec::standard(seed), 10000);
    const double r = oracle::rms(u.unaryExpr([](double v) { return saturate(v); }));
    CHECK(std::abs(r - 9.11) < 0.15);
  }
  BenchmarkConfig c;
  c.variant = Variant::B;
  CHECK(generate_dataset(c).est.meta.at("saturation") == "30tanh(u/30)");
}

TEST_CASE("variant C filters the output") {
  BenchmarkConfig a, c;
  c.variant = Variant::C;
  const Vec u = generate_multisine(MultisineSpec::standard(1), 2000);
  const Vec ya = simulate_system(a, u), yc = simulate_system(c, u);
  const double alpha = std::exp(-2.0 * M_PI * 5.0 * 0.02);
  double yf = 0.0;
  for (Index k = 0; k < 2000; ++k) {
    yf = alpha * yf + (1.0 - alpha) * ya(k);
    REQUIRE(yc(k) == doctest::Approx(yf).epsilon(1e-12));
  }
}

TEST_CASE("baseline parameter sets and stability") {
  CHECK(Msd2Baseline::param_set(Msd2Baseline::ParamSet::Approx) ==
        std::array<double, 6>{0.5, 0.4, 95, 95, 0.45, 0.45});
  const Msd2Baseline b(Msd2Baseline::param_set(Msd2Baseline::ParamSet::Ideal), 0.02);
  const Mat M = b.system_matrix(b.nominal_theta());
  const Eigen::VectorXcd ev = M.topLeftCorner(4, 4).eigenvalues();
  for (Index i = 0; i < ev.size(); ++i) CHECK(std::abs(ev(i)) < 1.0);
  // output is p2
  CHECK(M.row(4).isApprox((Mat(1, 5) << 0, 0, 1, 0, 0).finished()));
}

TEST_CASE("baseline parameter Jacobian matches central differences") {
  const Msd2Baseline b(Msd2Baseline::param_set(Msd2Baseline::ParamSet::Ideal), 0.02);
  const Vec th = b.nominal_theta();
  const Vec z = (Vec(5) << 0.01, -0.2, 0.03, 0.1, 4.0).finished();
  const Mat J = b.jacobian_theta(th, z);
  for (Index j = 0; j < 6; ++j) {
    Vec tp = th, tm = th;
    const double h = 1e-5 * th(j);
    tp(j) += h;
    tm(j) -= h;
    const Vec num = (b.eval(tp, z) - b.eval(tm, z)) / (2 * h);
    CHECK((J.col(j) - num).norm() <= 1e-5 * std::max(1e-8, num.norm()));
  }
}

TEST_CASE("truncated linear system reproduces the baseline") {
  // the third mass decoupled and no hardening; these parameters fail validation, so step directly
  MsdParams p;
  p.a1 = 0.0;
  p.k[2] = 0.0;
  p.c[2] = 0.0;
  const Vec u = generate_multisine(MultisineSpec::standard(4), 3000);
  Vec y(u.size());
  State6 s{};
  for (Index k = 0; k < u.size(); ++k) {
    y(k) = s[2];
    s = rk4_step(s, u(k), p, Variant::A, 0.02);
  }
  const Msd2Baseline b(Msd2Baseline::param_set(Msd2Baseline::ParamSet::Ideal), 0.02);
  const Vec th = b.nominal_theta();
  Vec x = Vec::Zero(4);
  double worst = 0.0;
  for (Index k = 0; k < u.size(); ++k) {
    const Vec w = b.eval(th, oracle::cat({x, u.segment(k, 1)}));
    worst = std::max(worst, std::abs(w(4) - y(k)));
    x = w.head(4);
  }
  CHECK(worst < 1e-10 * y.lpNorm<Eigen::Infinity>());
}

TEST_CASE("dataset csv round trip") {
  BenchmarkConfig c;
  c.period = 200;
  c.est_periods = 1;
  const BenchmarkData d = generate_dataset(c);
  const auto path = (std::filesystem::temp_directory_path() / "lfr_ds_test.csv").string();
  write_dataset_csv(d.est, path);
  const Dataset r = read_dataset_csv(path);
  CHECK(r.size() == d.est.size());
  CHECK((r.y - d.est.y).norm() == 0.0);
  CHECK((r.y_clean - d.est.y_clean).norm() == 0.0);
  CHECK(r.split == "est");
  CHECK(r.Ts == 0.02);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
  CHECK_THROWS_AS(read_dataset_csv(path), DataError);
}

TEST_CASE("seed derivation separates streams") {
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}
