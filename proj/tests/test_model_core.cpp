#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/benchmark.hpp"
#include "lfr/checkpoint.hpp"
#include "lfr/model_core.hpp"
#include "lfr/normalization.hpp"
#include "lfr/structures.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>

using namespace lfr;

namespace {

BaselinePtr scalar_affine(double a, double b, double c, double d) {
  return std::make_shared<AffineBaseline>(Mat::Constant(1, 1, a), Mat::Constant(1, 1, b),
                                          Mat::Constant(1, 1, c), Mat::Constant(1, 1, d));
}

BaselinePtr msd2() {
  return std::make_shared<msd::Msd2Baseline>(msd::Msd2Baseline::param_set(msd::Msd2Baseline::ParamSet::Ideal), 0.02);
}

}  // namespace

TEST_CASE("assembled blocks and modes") {
  const Dimensions d{2, 1, 1, 1, 2, 2};
  const LfrMatrix W = lfr_assemble(d, {{"A", Mat::Ones(3, 3)}, {"D_zw_ab", Mat::Ones(2, 3)}}, DzwMode::AbOnly);
  CHECK(W[Blk::A].isOnes());
  CHECK(W[Blk::B_u].isZero());
  CHECK(W.dense().rows() == 3 + 1 + 3 + 2);
  CHECK(W.dense().cols() == 3 + 1 + 3 + 2);
  CHECK_THROWS_AS(lfr_assemble(d, {{"D_zw_ab", Mat::Ones(2, 3)}}, DzwMode::Zero), ModeError);
  CHECK_THROWS_AS(lfr_assemble(d, {{"D_zw_ba", Mat::Ones(3, 2)}}, DzwMode::AbOnly), ModeError);
  CHECK_THROWS_AS(lfr_assemble(d, {{"A", Mat::Ones(2, 2)}}, DzwMode::Zero), DimensionError);
  CHECK_THROWS_AS(lfr_assemble(d, {{"Q", Mat::Ones(2, 2)}}, DzwMode::Zero), ConfigError);
  CHECK(mode_allows(DzwMode::Unrestricted, Blk::D_zw_bb));
  CHECK_FALSE(mode_allows(DzwMode::BaOnly, Blk::D_zw_ab));
  CHECK(parse_dzw_mode(to_string(DzwMode::BaOnly)) == DzwMode::BaOnly);
}

TEST_CASE("baseline-only LFR reproduces the baseline") {
  const AugmentedModel m = make_structured_model(parse_structure("S-SP", 0), scalar_affine(0.5, 2.0, 3.0, 0.25));
  // augmentation network is zero at construction
  const StepResult r = step(m, Vec::Constant(1, 1.0), Vec::Constant(1, 2.0));
  CHECK(r.x_next(0) == doctest::Approx(0.5 + 4.0));
  CHECK(r.y(0) == doctest::Approx(3.0 + 0.5));
}

TEST_CASE("latent loop equations hold after the solve") {
  std::mt19937_64 rng(1);
  for (const char* l : {"S-DSO", "S-DSI", "O-DSO", "S-SP-I", "S-SP+O-DSO"}) {
    AugmentedModel m = make_structured_model(parse_structure(l, 2), msd2(), {4});
    for (auto& b : m.aug.blocks) oracle::randomize(b.net, rng);
    const Vec x = Vec::Random(m.n_x()), u = Vec::Random(1);
    CHECK(latent_residual(m, x, u, solve_latent(m, x, u)) < 1e-12);
  }
}

TEST_CASE("unrestricted D_zw has no substitution order") {
  const AugmentedModel m = make_flexible_model(msd2(), 1, 2, 2, DzwMode::Unrestricted);
  CHECK_THROWS_AS(step(m, Vec::Zero(5), Vec::Zero(1)), ModeError);
}

TEST_CASE("simulation and divergence") {
  const AugmentedModel stable = make_structured_model(parse_structure("S-SP", 0), scalar_affine(0.5, 1.0, 1.0, 0.0));
  const Trajectory t = simulate(stable, Vec::Zero(1), Mat::Ones(50, 1));
  CHECK(t.x.rows() == 51);
  CHECK(t.y(49, 0) == doctest::Approx(2.0).epsilon(1e-9));  // fixed point 1 / (1 - 0.5)

  const AugmentedModel unstable = make_structured_model(parse_structure("S-SP", 0), scalar_affine(3.0, 1.0, 1.0, 0.0));
  try {
    simulate(unstable, Vec::Ones(1), Mat::Zero(100, 1));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 10);
    CHECK(e.step() < 40);
  }
}

TEST_CASE("dimension checks") {
  const AugmentedModel m = make_structured_model(parse_structure("S-DP", 2), msd2());
  CHECK_THROWS_AS(step(m, Vec::Zero(4), Vec::Zero(1)), DimensionError);
  CHECK_THROWS_AS(step(m, Vec::Zero(6), Vec::Zero(2)), DimensionError);
}

TEST_CASE("resnet jacobian matches differences") {
  std::mt19937_64 rng(2);
  ResNet net(3, {5, 4}, 2);
  oracle::randomize(net, rng);
  const Vec z = Vec::Random(3);
  const Mat J = net.jacobian(z);
  for (Index j = 0; j < 3; ++j) {
    Vec zp = z, zm = z;
    zp(j) += 1e-6;
    zm(j) -= 1e-6;
    CHECK((J.col(j) - (net.eval(zp) - net.eval(zm)) / 2e-6).norm() < 1e-8);
  }
  CHECK(net.n_params() == 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2 + 2 * 3);
}

TEST_CASE("resnet with zero output layer is its bypass") {
  std::mt19937_64 rng(3);
  ResNet net(2, {6}, 2);
  net.init_xavier(rng, true);
  net.bypass = Mat::Identity(2, 2);
  const Vec z = Vec::Random(2);
  CHECK((net.eval(z) - z).norm() < 1e-15);
}

TEST_CASE("encoder input ordering") {
  EncoderNet e(2, 3, 1, 1, 1, 0, {});
  Mat yh(2, 1), uh(3, 1);
  yh << 1, 2;
  uh << 3, 4, 5;
  const Vec in = encoder_input(e, yh, uh);
  CHECK(in == (Vec(5) << 1, 2, 3, 4, 5).finished());
  CHECK(e.lag() == 3);
}

TEST_CASE("normalized baseline equals the raw one up to the transforms") {
  NormalizationTransforms n;
  n.u_mean = Vec::Constant(1, 0.3);
  n.u_std = Vec::Constant(1, 7.0);
  n.y_mean = Vec::Constant(1, -0.01);
  n.y_std = Vec::Constant(1, 0.05);
  n.x_std = (Vec(4) << 0.05, 0.4, 0.04, 0.5).finished();
  const BaselinePtr raw = msd2();
  NormalizedBaseline nb(raw, n);
  const Vec theta = raw->nominal_theta();
  const Vec x = Vec::Random(4), u = Vec::Random(1) * 10.0;
  const Vec w = raw->eval(theta, oracle::cat({x, u}));
  const Vec wn = nb.eval(theta, oracle::cat({n.normalize_x(x), n.normalize_u(u.transpose()).transpose()}));
  CHECK((n.denormalize_x(wn.head(4)) - w.head(4)).norm() < 1e-12);
  CHECK(n.denormalize_y(wn.tail(1).transpose())(0, 0) == doctest::Approx(w(4)));

  const Vec z = Vec::Random(5);
  const Mat J = nb.jacobian_z(theta, z);
  const Mat Jt = nb.jacobian_theta(theta, z);
  for (Index j = 0; j < 5; ++j) {
    Vec zp = z, zm = z;
    zp(j) += 1e-6;
    zm(j) -= 1e-6;
    CHECK((J.col(j) - (nb.eval(theta, zp) - nb.eval(theta, zm)) / 2e-6).norm() < 1e-6 * (1 + J.norm()));
  }
  for (Index j = 0; j < 6; ++j) {
    Vec tp = theta, tm = theta;
    const double h = 1e-6 * theta(j);
    tp(j) += h;
    tm(j) -= h;
    CHECK((Jt.col(j) - (nb.eval(tp, z) - nb.eval(tm, z)) / (2 * h)).norm() < 1e-5 * (1 + Jt.col(j).norm()));
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(4);
  AugmentedModel m = make_structured_model(parse_structure("S-DSO", 1), msd2(), {4});
  for (auto& b : m.aug.blocks) oracle::randomize(b.net, rng);
  m.encoder = EncoderNet(2, 2, 1, 1, 4, 1, {3});
  oracle::randomize(m.encoder.base_head, rng);
  oracle::randomize(m.encoder.aug_head, rng);
  const auto path = (std::filesystem::temp_directory_path() / "lfr_ckpt_test.json").string();
  save_checkpoint(m, path);
  const AugmentedModel r = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(r.structure == "S-DSO");
  CHECK(r.dims == m.dims);
  const Vec x = Vec::Random(5), u = Vec::Random(1);
  CHECK((step(r, x, u).x_next - step(m, x, u).x_next).norm() == 0.0);
  CHECK((encoder_input(r.encoder, Mat::Ones(2, 1), Mat::Ones(2, 1)) -
         encoder_input(m.encoder, Mat::Ones(2, 1), Mat::Ones(2, 1))).norm() == 0.0);
  CHECK((r.encoder.estimate_flat(Vec::Ones(4)) - m.encoder.estimate_flat(Vec::Ones(4))).norm() == 0.0);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}
