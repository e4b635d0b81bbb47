#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/benchmark.hpp"
#include "lfr/graph.hpp"
#include "lfr/structures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <random>

using namespace lfr;

namespace {

BaselinePtr msd2() {
  return std::make_shared<msd::Msd2Baseline>(msd::Msd2Baseline::param_set(msd::Msd2Baseline::ParamSet::Ideal), 0.02);
}

// Two inputs and two outputs so the wiring of multi-channel blocks is exercised.
BaselinePtr affine_mimo() {
  Mat a(3, 3), b(3, 2), c(2, 3), d(2, 2);
  a << 0.9, 0.1, 0.0, -0.2, 0.8, 0.3, 0.05, 0.0, 0.7;
  b << 1.0, 0.0, 0.5, -1.0, 0.0, 0.2;
  c << 1.0, 0.0, 2.0, 0.0, -1.0, 0.5;
  d << 0.0, 0.1, 0.3, 0.0;
  return std::make_shared<AffineBaseline>(a, b, c, d);
}

const char* kLabels[] = {"S-SP",  "S-SSO", "S-SSI", "S-DP",   "S-DSO", "S-DSI", "O-SP",
                         "O-SSO", "O-SSI", "O-DP",  "O-DSO",  "O-DSI", "S-SP-I", "S-SP+O-DSO"};

void check_against_oracle(const BaselinePtr& base, const std::string& label, std::uint64_t seed) {
  const StructureSpec spec = parse_structure(label, 2);
  AugmentedModel m = make_structured_model(spec, base, {6, 5});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const Vec theta0 = m.theta_base;
  double worst = 0.0;
  for (int draw = 0; draw < 25; ++draw) {
    for (auto& blk : m.aug.blocks) oracle::randomize(blk.net, rng);
    m.theta_base = theta0.unaryExpr([&](double t) { return t * (1.0 + 0.2 * U(rng)); });
    const Vec x = Vec::NullaryExpr(m.n_x(), [&] { return U(rng); });
    const Vec u = Vec::NullaryExpr(m.dims.n_u, [&] { return 3.0 * U(rng); });
    const StepResult got = step(m, x, u);
    const StepResult want = oracle::structure_step(m, spec, x, u);
    worst = std::max({worst, oracle::rel_err(got.x_next, want.x_next), oracle::rel_err(got.y, want.y)});
  }
  INFO(label);
  CHECK(worst < 1e-10);
}

}  // namespace

TEST_CASE("structured step matches the structure formulas (msd baseline)") {
  std::uint64_t s = 1;
  for (const char* l : kLabels) check_against_oracle(msd2(), l, s++);
}

TEST_CASE("structured step matches the structure formulas (3-state, 2-in, 2-out)") {
  std::uint64_t s = 100;
  for (const char* l : kLabels) check_against_oracle(affine_mimo(), l, s++);
}

TEST_CASE("labels parse and round-trip") {
  CHECK(parse_structure("S-DP", 2).label() == "S-DP");
  CHECK(parse_structure("S-SP-I", 0).label() == "S-SP-I");
  CHECK(parse_structure("S-SP+O-DSO", 1).labels() == std::vector<std::string>{"S-SP", "O-DSO"});
  CHECK(parse_structure("O-SSP", 0).label() == "O-SSO");
  CHECK(is_catalog_label("O-SSP"));
  CHECK_FALSE(is_catalog_label("S-XP"));
  CHECK_THROWS_AS(parse_structure("S-QQ", 1), ConfigError);
  CHECK_THROWS_AS(parse_structure("S-DP", 0), ConfigError);
}

TEST_CASE("invalid combinations are rejected") {
  CHECK_THROWS_AS(parse_structure("S-SSO+O-SSI", 0).validate(), ModeError);
  CHECK_THROWS_AS(parse_structure("S-SSI+O-SSI", 0).validate(), Error);
  StructureSpec s;
  s.input_series = true;
  CHECK_THROWS(s.validate());
}

TEST_CASE("modes follow the series parts") {
  CHECK(parse_structure("S-SP", 0).mode() == DzwMode::Zero);
  CHECK(parse_structure("O-DP", 1).mode() == DzwMode::Zero);
  CHECK(parse_structure("S-DSO", 1).mode() == DzwMode::AbOnly);
  CHECK(parse_structure("O-SSI", 0).mode() == DzwMode::BaOnly);
  CHECK(parse_structure("S-SP-I", 0).mode() == DzwMode::BaOnly);
}

TEST_CASE("factory dims") {
  const AugmentedModel m = make_state_structure(AugKind::Parallel, true, msd2(), 2);
  CHECK(m.dims.n_x_b == 4);
  CHECK(m.dims.n_x_a == 2);
  CHECK(m.dims.n_z_a == 4 + 2 + 1);
  CHECK(m.dims.n_w_a == 4 + 2);
  CHECK_THROWS_AS(make_state_structure(AugKind::Parallel, false, msd2(), 2), ConfigError);
  CHECK_THROWS_AS(make_output_structure(AugKind::Parallel, true, msd2(), 0), ConfigError);
}

TEST_CASE("composition keeps the state networks and stays well-posed") {
  AugmentedModel s = make_state_structure(AugKind::Parallel, false, msd2(), 0);
  std::mt19937_64 rng(4);
  oracle::randomize(s.aug.blocks[0].net, rng);
  const AugmentedModel c = compose_structures(s, Extra::OutputSeriesDynamic, 1);
  CHECK(c.structure == "S-SP+O-DSO");
  CHECK(c.aug.find("state")->net.weights[0].isApprox(s.aug.blocks[0].net.weights[0]));
  CHECK(check_well_posed(c, 5).verdict);
  const AugmentedModel ci = compose_structures(s, Extra::InputSeries);
  CHECK(ci.structure == "S-SP-I");
  CHECK_THROWS_AS(compose_structures(c, Extra::InputSeries), ConfigError);
}

TEST_CASE("detection recovers each factory label") {
  for (const char* l : kLabels) {
    const AugmentedModel m = make_structured_model(parse_structure(l, 2), msd2());
    const auto found = detect_structure(build_adjacency(m), m.dims);
    std::string got;
    for (const auto& f : found) got += f + " ";
    INFO(std::string(l), " -> ", got);
    auto want = parse_structure(l, 2).labels();
    std::sort(want.begin(), want.end());
    CHECK(found == want);
  }
}

TEST_CASE("dense flexible models match no catalog structure") {
  for (DzwMode mode : {DzwMode::Zero, DzwMode::AbOnly, DzwMode::BaOnly, DzwMode::Unrestricted}) {
    const AugmentedModel m = make_flexible_model(msd2(), 2, 4, 4, mode);
    CHECK(detect_structure(build_adjacency(m), m.dims).empty());
  }
}

TEST_CASE("catalog entries are valid and well-posed") {
  for (Index nxa : {0, 1, 2}) {
    for (const StructureSpec& s : structure_catalog(nxa)) {
      CHECK(s.n_x_a() == nxa);
      const AugmentedModel m = make_structured_model(s, msd2(), {4});
      INFO(s.label());
      CHECK(check_well_posed(m, 3).verdict);
    }
  }
}
