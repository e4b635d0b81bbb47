#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lfr/benchmark.hpp"
#include "lfr/graph.hpp"
#include "lfr/model_tape.hpp"
#include "lfr/structures.hpp"
#include "lfr/training.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace lfr;

namespace {

BaselinePtr msd_ideal() {
  return std::make_shared<msd::Msd2Baseline>(msd::Msd2Baseline::param_set(msd::Msd2Baseline::ParamSet::Ideal), 0.02);
}

msd::BenchmarkData small_data(std::uint64_t seed = 1) {
  msd::BenchmarkConfig c;
  c.period = 1000;
  c.seed = seed;
  return msd::generate_dataset(c);
}

// Normalized, wrapped model with a random encoder, as the pipeline builds it.
AugmentedModel wrapped_model(const std::string& structure, const Dataset& est, Index n_x_a = 2) {
  const BaselinePtr base = msd_ideal();
  NormalizationTransforms norm = fit_normalization(est);
  norm.x_std = simulate_baseline_states(*base, est, base->nominal_theta(), 7).x_std;
  ExperimentConfig ec;
  ec.structure = structure;
  ec.n_x_a = n_x_a;
  ec.flexible_mode = DzwMode::AbOnly;
  AugmentedModel m = build_model(ec, wrap_baseline_normalized(base, norm));
  m.norm = norm;
  m.encoder = EncoderNet(7, 7, 1, 1, 4, m.dims.n_x_a, {8});
  return m;
}

}  // namespace

TEST_CASE("normalization uses sample statistics") {
  Dataset d;
  d.u = (Mat(4, 1) << 1, 2, 3, 4).finished();
  d.y = (Mat(4, 1) << 2, 2, 2, 6).finished();
  const NormalizationTransforms n = fit_normalization(d);
  CHECK(n.u_mean(0) == doctest::Approx(2.5));
  CHECK(n.u_std(0) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(n.y_std(0) == doctest::Approx(2.0));
  const Mat un = n.normalize_u(d.u);
  CHECK(un.mean() == doctest::Approx(0.0));
  CHECK((n.denormalize_u(un) - d.u).norm() < 1e-14);
  d.u.setConstant(1.0);
  CHECK_THROWS_AS(fit_normalization(d), DataError);
}

TEST_CASE("baseline states skip the encoder lag") {
  const auto data = small_data();
  const BaselinePtr b = msd_ideal();
  const BaselineStates s = simulate_baseline_states(*b, data.est, b->nominal_theta(), 7);
  CHECK(s.extended.x_base.rows() == data.est.size());
  CHECK(s.extended.x_base.row(0).isZero());
  CHECK(s.x_std.size() == 4);
  CHECK((s.x_std.array() > 0).all());
}

TEST_CASE("initialization reproduces the wrapped baseline for every structure") {
  const auto data = small_data();
  std::vector<std::string> names;
  for (const StructureSpec& s : structure_catalog(0)) names.push_back(s.label());
  for (const StructureSpec& s : structure_catalog(2)) names.push_back(s.label());
  names.push_back("flexible");
  for (const std::string& name : names) {
    AugmentedModel m = wrapped_model(name, data.est);
    init_baseline_equivalent(m, 5);
    const Mat u = m.norm.normalize_u(data.val.u.topRows(500));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1, 1);
    Vec x0 = Vec::NullaryExpr(m.n_x(), [&] { return U(rng); });
    const Trajectory t = simulate(m, x0, u);
    Vec xb = x0.head(4);
    double dy = 0.0, dx = 0.0, ys = 0.0, xs = 0.0;
    for (Index k = 0; k < 500; ++k) {
      const Vec w = m.base->eval(m.theta_base0, oracle::cat({xb, u.row(k).transpose()}));
      dy = std::max(dy, std::abs(w(4) - t.y(k, 0)));
      ys = std::max(ys, std::abs(w(4)));
      xb = w.head(4);
      dx = std::max(dx, (xb - t.x.row(k + 1).head(4).transpose()).lpNorm<Eigen::Infinity>());
      xs = std::max(xs, xb.lpNorm<Eigen::Infinity>());
    }
    INFO(name);
    CHECK(dy <= 1e-9 * ys);
    CHECK(dx <= 1e-9 * xs);
    CHECK(check_well_posed(m, 5).verdict);
  }
}

TEST_CASE("unrestricted models have no baseline-equivalent start") {
  const auto data = small_data();
  AugmentedModel m = make_flexible_model(msd_ideal(), 1, 2, 2, DzwMode::Unrestricted);
  CHECK_THROWS_AS(init_baseline_equivalent(m, 1), ModeError);
}

TEST_CASE("regularizer") {
  const auto data = small_data();
  AugmentedModel m = wrapped_model("S-SP", data.est, 0);
  init_baseline_equivalent(m, 1);
  const Mat u = m.norm.normalize_u(data.est.u), y = m.norm.normalize_y(data.est.y);
  const std::vector<Index> starts{10, 50};
  const double base = regularized_loss(m, u, y, starts, 10, 3.0);
  CHECK(base == doctest::Approx(truncated_loss(m, u, y, starts, 10)));
  m.theta_base(2) *= 1.1;
  const double moved = regularized_loss(m, u, y, starts, 10, 3.0) - truncated_loss(m, u, y, starts, 10);
  CHECK(moved == doctest::Approx(9.0 * 0.01));
  m.theta_base0(1) = 0.0;
  CHECK_THROWS_WITH_AS(regularized_loss(m, u, y, starts, 10, 1.0), doctest::Contains("m2"), NumericError);
}

TEST_CASE("tiled starts") {
  CHECK(tiled_starts(30, 7, 10) == std::vector<Index>{7, 17});
  CHECK(tiled_starts(10, 7, 10).empty());
}

TEST_CASE("evaluation metrics") {
  const auto data = small_data();
  AugmentedModel m = wrapped_model("S-SP", data.est, 0);
  init_baseline_equivalent(m, 1);
  Dataset d = normalize_dataset(data.test, m.norm);

  // perfect replay: outputs are what the model itself produces
  const Vec x0 = encoder_estimate(m.encoder, d.y.topRows(7), d.u.topRows(7));
  const Trajectory t = simulate(m, x0, d.u.bottomRows(d.size() - 7));
  d.y.bottomRows(d.size() - 7) = t.y;
  CHECK(evaluate(m, d).rmse < 1e-12);

  // zero model against a centered record
  AugmentedModel z = m;
  z.W[Blk::D_yw_b].setZero();
  Dataset c = normalize_dataset(data.test, m.norm);
  c.y.array() -= c.y.bottomRows(c.size() - 7).mean();
  z.norm.y_mean.setZero();
  CHECK(evaluate(z, c, Metric::NRMS) == doctest::Approx(100.0).epsilon(1e-3));
  CHECK_THROWS_AS(parse_metric("mae"), ConfigError);
}

TEST_CASE("baseline simulation error on the raw test split") {
  const auto data = small_data();
  const BaselinePtr b = msd_ideal();
  const EvalResult r = baseline_simulation_error(*b, b->nominal_theta(), data.test);
  CHECK(r.rmse > 0.05);
  CHECK(r.rmse < 0.5);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("configuration parsing") {
  const TrainingConfig d;
  CHECK(d.T == 200);
  CHECK(d.batch_size == 2000);
  CHECK(d.epochs == 3000);
  CHECK(d.n_a == 7);
  CHECK(d.lr == 1e-3);
  const TrainingConfig c = TrainingConfig::from_json({{"T", 50}, {"lambda", 0.5}});
  CHECK(c.T == 50);
  CHECK(c.lambda == 0.5);
  CHECK(TrainingConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(TrainingConfig::from_json({{"Tee", 50}}), ConfigError);
  CHECK_THROWS_AS(TrainingConfig::from_json({{"T", 0}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"structure", "S-ZZ"}}), ConfigError);
}

TEST_CASE("short training run is deterministic and improves the fit") {
  const auto data = small_data(3);
  ExperimentConfig ec;
  ec.structure = "S-DP";
  ec.hidden = {8};
  ec.train.T = 20;
  ec.train.batch_size = 200;
  ec.train.epochs = 4;
  ec.train.encoder_epochs = 20;
  ec.train.encoder_hidden = {8};
  const PipelineResult a = run_pipeline(msd_ideal(), data.est, data.val, ec);
  const PipelineResult b = run_pipeline(msd_ideal(), data.est, data.val, ec);
  REQUIRE(a.run.history.size() == 5);
  CHECK(a.run.history[0].epoch == 0);
  for (std::size_t i = 0; i < a.run.history.size(); ++i) {
    CHECK(a.run.history[i].val_rmse == b.run.history[i].val_rmse);
  }
  CHECK(pack_params(a.model).values == pack_params(b.model).values);
  CHECK(a.run.best_val_rmse <= a.run.history[0].val_rmse);
  CHECK(a.run.theta_trace.size() == 4);
  CHECK_FALSE(a.run.aborted);

  const auto path = (std::filesystem::temp_directory_path() / "lfr_metrics_test.csv").string();
  write_metrics_csv(a.run, path, ec.to_json());
  std::ifstream f(path);
  std::string l1, l2;
  std::getline(f, l1);
  std::getline(f, l2);
  CHECK(l1.rfind("# config: ", 0) == 0);
  CHECK(l2 == "epoch,train_loss,reg_term,val_rmse,val_trunc_loss");
  std::filesystem::remove(path);
}

TEST_CASE("pipeline errors carry the stage") {
  const auto data = small_data();
  ExperimentConfig ec;
  ec.structure = "flexible";
  ec.flexible_mode = DzwMode::Unrestricted;
  ec.train.epochs = 1;
  ec.train.encoder_epochs = 1;
  try {
    run_pipeline(msd_ideal(), data.est, data.val, ec);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "init");
  }
  Dataset flat = data.est;
  flat.u.setZero();
  try {
    run_pipeline(msd_ideal(), flat, data.val, ExperimentConfig{});
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "normalize");
  }
}
