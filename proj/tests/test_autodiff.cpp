#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/autodiff.hpp"
#include "lfr/kernels.hpp"
#include "lfr/model_tape.hpp"
#include "lfr/structures.hpp"
#include "oracles.hpp"

#include <random>

using namespace lfr;
using namespace lfr::ad;

namespace {

Mat rnd(Index r, Index c, std::mt19937_64& rng, double s = 1.0) {
  std::uniform_real_distribution<double> U(-s, s);
  return Mat::NullaryExpr(r, c, [&] { return U(rng); });
}

// f = sum(tanh(W x + b) * v) + 0.5 ||W||^2 + dot(x, x)^-1 + sum(slice^3)
NodeId toy_loss(Tape& t, const ParamVector&) {
  const NodeId W = t.param("W"), b = t.param("b"), x = t.param("x"), v = t.param("v");
  const NodeId h = t.tanh(t.add(t.matmul(W, x), b));
  NodeId l = t.sum(t.mul(h, v));
  l = t.add(l, t.scale(t.sqnorm(W), 0.5));
  l = t.add(l, t.reciprocal(t.add(t.dot(x, x), t.scalar(1.0))));
  l = t.add(l, t.sum(t.pow(t.slice_rows(t.concat_rows({h, x}), 1, 3), 3)));
  l = t.sub(l, t.mean(t.neg(h)));
  return l;
}

ParamVector toy_params(std::mt19937_64& rng) {
  ParamVector p;
  p.add("W", rnd(3, 2, rng), true);
  p.add("b", rnd(3, 1, rng), true);
  p.add("x", rnd(2, 4, rng), true);
  p.add("v", rnd(3, 4, rng), true);
  return p;
}

AugmentedModel toy_model(std::mt19937_64& rng) {
  Mat a(2, 2), b(2, 1), c(1, 2), d(1, 1);
  a << 0.9, 0.2, -0.3, 0.7;
  b << 0.5, 1.0;
  c << 1.0, -0.5;
  d << 0.1;
  AugmentedModel m = make_structured_model(parse_structure("S-SP", 0),
                                           std::make_shared<AffineBaseline>(a, b, c, d), {5, 5});
  for (auto& blk : m.aug.blocks) oracle::randomize(blk.net, rng, 0.5);
  m.encoder = EncoderNet(3, 3, 1, 1, 2, 0, {4});
  oracle::randomize(m.encoder.base_head, rng, 0.5);
  m.theta_base = m.theta_base0.array() * (1.0 + 0.1 * rnd(m.theta_base0.size(), 1, rng).array());
  return m;
}

}  // namespace

TEST_CASE("tape gradients of elementary operations") {
  std::mt19937_64 rng(2);
  const ParamVector p = toy_params(rng);
  std::vector<Index> all(static_cast<std::size_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  CHECK(check_grad(toy_loss, p, all, 1e-6) < 1e-7);
}

TEST_CASE("frozen slices get no gradient") {
  std::mt19937_64 rng(3);
  ParamVector p = toy_params(rng);
  p.set_trainable("W", false);
  const GradResult g = grad(toy_loss, p);
  const auto& s = p.slice("W");
  CHECK(g.grad.segment(s.offset, s.size()).isZero());
  CHECK_FALSE(g.grad.segment(p.slice("b").offset, 3).isZero());
}

TEST_CASE("non-finite values are reported") {
  ParamVector p;
  p.add("a", Mat::Zero(1, 1), true);
  auto builder = [](Tape& t, const ParamVector&) { return t.reciprocal(t.param("a")); };
  CHECK_THROWS_AS(eval_loss(builder, p), NumericError);
}

TEST_CASE("custom primitive") {
  CustomPrimitive sq;
  sq.shape = [](const std::vector<Shape>& s, const void*) { return s[0]; };
  sq.forward = [](CustomCall& c) {
    for (Index i = 0; i < c.out_shape.size(); ++i) c.out[i] = c.in[0][i] * c.in[0][i];
  };
  sq.backward = [](CustomCall& c) {
    if (c.gin[0])
      for (Index i = 0; i < c.out_shape.size(); ++i) c.gin[0][i] += 2.0 * c.in[0][i] * c.gout[i];
  };
  register_primitive("test.square", sq);
  ParamVector p;
  p.add("a", (Mat(2, 1) << 1.5, -2.0).finished(), true);
  auto builder = [](Tape& t, const ParamVector&) { return t.sum(t.custom("test.square", {t.param("a")})); };
  const GradResult g = grad(builder, p);
  CHECK(g.value == doctest::Approx(6.25));
  CHECK(g.grad(0) == doctest::Approx(3.0));
  CHECK(g.grad(1) == doctest::Approx(-4.0));
}

TEST_CASE("model loss matches plain simulation and central differences") {
  std::mt19937_64 rng(7);
  AugmentedModel m = toy_model(rng);
  const Index N = 60;
  const Mat u = rnd(N, 1, rng, 2.0), y = rnd(N, 1, rng, 1.0);
  const std::vector<Index> starts{3, 10, 25, 41, 50};
  const Index T = 10;
  const double lambda = 2.0;

  const ParamVector p = pack_params(m);
  const LossValue lv = loss_and_grad(m, p, u, y, starts, T, lambda, true, 2);
  CHECK(lv.loss == doctest::Approx(oracle::plain_loss(m, u, y, starts, T, lambda)).epsilon(1e-12));

  std::uniform_int_distribution<Index> pick(0, p.size() - 1);
  const Vec mask = p.trainable_mask();
  int checked = 0;
  while (checked < 20) {
    const Index c = pick(rng);
    if (mask(c) == 0.0) continue;
    auto at = [&](double dv) {
      ParamVector q = p;
      q.values(c) += dv;
      AugmentedModel mm = m;
      unpack_params(q, mm);
      return oracle::plain_loss(mm, u, y, starts, T, lambda);
    };
    const double h = 1e-6;
    const double num = (at(h) - at(-h)) / (2 * h);
    INFO("coordinate " << c);
    CHECK(std::abs(num - lv.grad(c)) <= 1e-5 * std::max({std::abs(num), std::abs(lv.grad(c)), 1e-3}));
    ++checked;
  }
}

TEST_CASE("chunking does not change the result") {
  std::mt19937_64 rng(8);
  AugmentedModel m = toy_model(rng);
  const Mat u = rnd(80, 1, rng), y = rnd(80, 1, rng);
  std::vector<Index> starts;
  for (Index k = 3; k < 70; k += 2) starts.push_back(k);
  const ParamVector p = pack_params(m);
  const LossValue a = loss_and_grad(m, p, u, y, starts, 8, 1.0, true, 128);
  const LossValue b = loss_and_grad(m, p, u, y, starts, 8, 1.0, true, 5);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
  CHECK((a.grad - b.grad).norm() <= 1e-12 * (1.0 + a.grad.norm()));
}

TEST_CASE("scalar and avx2 backends give the same loss and gradient") {
  if (!kernels::backend_available(kernels::Backend::Avx2)) return;
  std::mt19937_64 rng(9);
  AugmentedModel m = toy_model(rng);
  const Mat u = rnd(80, 1, rng), y = rnd(80, 1, rng);
  std::vector<Index> starts;
  for (Index k = 3; k < 70; ++k) starts.push_back(k);
  const ParamVector p = pack_params(m);
  const auto before = kernels::active().backend;
  kernels::set_backend(kernels::Backend::Scalar);
  const LossValue a = loss_and_grad(m, p, u, y, starts, 8, 1.0, true);
  kernels::set_backend(kernels::Backend::Avx2);
  const LossValue b = loss_and_grad(m, p, u, y, starts, 8, 1.0, true);
  kernels::set_backend(before);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK((a.grad - b.grad).norm() <= 1e-10 * (1.0 + a.grad.norm()));
}

TEST_CASE("pack and unpack are inverse") {
  std::mt19937_64 rng(10);
  AugmentedModel m = toy_model(rng);
  ParamVector p = pack_params(m);
  p.values = Vec::NullaryExpr(p.size(), [&] { return std::uniform_real_distribution<double>(-1, 1)(rng); });
  AugmentedModel m2 = m;
  unpack_params(p, m2);
  CHECK(pack_params(m2).values == p.values);
}

TEST_CASE("subsections must fit the record") {
  std::mt19937_64 rng(11);
  AugmentedModel m = toy_model(rng);
  const Mat u = rnd(30, 1, rng), y = rnd(30, 1, rng);
  CHECK_THROWS_AS(loss_and_grad(m, pack_params(m), u, y, {1}, 5, 0.0, false), DataError);
  CHECK_THROWS_AS(loss_and_grad(m, pack_params(m), u, y, {26}, 5, 0.0, false), DataError);
}
