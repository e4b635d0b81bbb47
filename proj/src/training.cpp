#include "lfr/training.hpp"

#include "lfr/model_tape.hpp"
#include "lfr/structures.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace lfr {

// ---- config ----------------------------------------------------------------

void TrainingConfig::validate() const {
  if (T < 2) throw ConfigError("T must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (n_a < 0 || n_b < 0 || n_a + n_b == 0) throw ConfigError("encoder lags must give n_a + n_b >= 1");
  if (val_every < 1) throw ConfigError("val_every must be >= 1");
  if (chunk < 1) throw ConfigError("chunk must be >= 1");
  if (encoder_epochs < 0 || encoder_batch < 1) throw ConfigError("invalid encoder pre-fit budget");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"T", T},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"lambda", lambda},
          {"n_a", n_a},
          {"n_b", n_b},
          {"encoder_hidden", encoder_hidden},
          {"encoder_epochs", encoder_epochs},
          {"encoder_batch", encoder_batch},
          {"seed", seed},
          {"val_every", val_every},
          {"chunk", chunk}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  const nlohmann::json defaults = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("unknown training key '" + it.key() + "'");
  }
  c.T = j.value("T", c.T);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.lambda = j.value("lambda", c.lambda);
  c.n_a = j.value("n_a", c.n_a);
  c.n_b = j.value("n_b", c.n_b);
  c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
  c.encoder_epochs = j.value("encoder_epochs", c.encoder_epochs);
  c.encoder_batch = j.value("encoder_batch", c.encoder_batch);
  c.seed = j.value("seed", c.seed);
  c.val_every = j.value("val_every", c.val_every);
  c.chunk = j.value("chunk", c.chunk);
  c.validate();
  return c;
}

// ---- normalization ---------------------------------------------------------

namespace {

Vec col_mean(const Mat& m) { return m.colwise().mean().transpose(); }

Vec col_std(const Mat& m) {
  const Vec mu = col_mean(m);
  Vec s(m.cols());
  const double denom = std::max<double>(static_cast<double>(m.rows() - 1), 1.0);
  for (Index c = 0; c < m.cols(); ++c) s(c) = std::sqrt((m.col(c).array() - mu(c)).square().sum() / denom);
  return s;
}

}  // namespace

NormalizationTransforms fit_normalization(const Dataset& est) {
  est.validate();
  if (est.size() < 2) throw DataError("normalization needs at least two samples");
  NormalizationTransforms t;
  t.u_mean = col_mean(est.u);
  t.u_std = col_std(est.u);
  t.y_mean = col_mean(est.y);
  t.y_std = col_std(est.y);
  for (Index c = 0; c < t.u_std.size(); ++c)
    if (!(t.u_std(c) > 0.0)) throw DataError("input channel " + std::to_string(c) + " has zero variance");
  for (Index c = 0; c < t.y_std.size(); ++c)
    if (!(t.y_std(c) > 0.0)) throw DataError("output channel " + std::to_string(c) + " has zero variance");
  return t;
}

BaselinePtr wrap_baseline_normalized(BaselinePtr base, const NormalizationTransforms& norm) {
  return std::make_shared<NormalizedBaseline>(std::move(base), norm);
}

Dataset normalize_dataset(const Dataset& raw, const NormalizationTransforms& norm) {
  Dataset d = raw;
  d.u = norm.normalize_u(raw.u);
  d.y = norm.normalize_y(raw.y);
  if (raw.y_clean.size() > 0) d.y_clean = norm.normalize_y(raw.y_clean);
  if (raw.x_base.size() > 0) {
    if (raw.x_base.cols() != norm.x_std.size()) throw DimensionError("x_base does not match x_std");
    d.x_base = raw.x_base * norm.x_std.cwiseInverse().asDiagonal();
  }
  return d;
}

BaselineStates simulate_baseline_states(const BaselineComponent& base, const Dataset& est,
                                        const Vec& theta0, Index discard) {
  est.validate();
  if (est.n_u() != base.n_u()) throw DimensionError("baseline/dataset input count mismatch");
  const Index N = est.size(), nx = base.n_x();
  if (discard < 0 || discard + 2 > N) throw DataError("not enough samples after the transient");
  BaselineStates r;
  r.extended = est;
  r.extended.x_base.resize(N, nx);
  Vec x = Vec::Zero(nx);
  Vec z(base.n_z());
  for (Index k = 0; k < N; ++k) {
    r.extended.x_base.row(k) = x.transpose();
    z.head(nx) = x;
    z.tail(base.n_u()) = est.u.row(k).transpose();
    x = base.eval(theta0, z).head(nx);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("baseline simulation diverged at step " + std::to_string(k),
                            static_cast<std::size_t>(k));
    }
  }
  r.x_std = col_std(r.extended.x_base.bottomRows(N - discard));
  for (Index i = 0; i < nx; ++i)
    if (!(r.x_std(i) > 0.0)) throw DataError("baseline state " + std::to_string(i) + " has zero variance");
  return r;
}

// ---- Adam ------------------------------------------------------------------

namespace {

struct Adam {
  double lr, b1, b2, eps;
  Vec m, v;
  Index t = 0;

  Adam(const TrainingConfig& c, Index n) : lr(c.lr), b1(c.beta1), b2(c.beta2), eps(c.eps) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
  }

  void step(Vec& x, const Vec& g, const Vec& mask) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (Index i = 0; i < x.size(); ++i) {
      if (mask(i) == 0.0) continue;
      m(i) = b1 * m(i) + (1.0 - b1) * g(i);
      v(i) = b2 * v(i) + (1.0 - b2) * g(i) * g(i);
      x(i) -= lr * (m(i) / c1) / (std::sqrt(v(i) / c2) + eps);
    }
  }
};

Mat encoder_windows(const EncoderNet& enc, const Mat& u, const Mat& y, const std::vector<Index>& ks) {
  Mat w(enc.input_size(), static_cast<Index>(ks.size()));
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const Index k = ks[j];
    w.col(static_cast<Index>(j)) = encoder_input(enc, y.block(k - enc.n_a, 0, enc.n_a, y.cols()),
                                                 u.block(k - enc.n_b, 0, enc.n_b, u.cols()));
  }
  return w;
}

}  // namespace

double pretrain_encoder(EncoderNet& enc, const Mat& u_n, const Mat& y_n, const Mat& xb_n,
                        const TrainingConfig& cfg, std::mt19937_64& rng) {
  const Index N = u_n.rows(), lag = enc.lag(), nxb = enc.n_x_b();
  if (N <= lag) throw DataError("encoder pre-fit: need more than " + std::to_string(lag) + " samples");
  if (xb_n.rows() != N || xb_n.cols() != nxb) throw DimensionError("encoder pre-fit: state record shape");

  enc.base_head.init_xavier(rng, false);
  enc.base_head.bypass.setZero();
  if (enc.n_x_a() > 0) {
    enc.aug_head.init_xavier(rng, false);
    enc.aug_head.bypass.setZero();
  }

  ad::ParamVector p;
  pack_resnet(p, "enc.b", enc.base_head);
  std::vector<Index> ks(static_cast<std::size_t>(N - lag));
  std::iota(ks.begin(), ks.end(), lag);
  const Mat all_in = encoder_windows(enc, u_n, y_n, ks);

  auto batch_loss = [&](ad::Tape& t, const std::vector<Index>& idx, std::size_t from, std::size_t cnt) {
    Mat in(all_in.rows(), static_cast<Index>(cnt));
    Mat tgt(nxb, static_cast<Index>(cnt));
    for (std::size_t j = 0; j < cnt; ++j) {
      const Index c = idx[from + j];
      in.col(static_cast<Index>(j)) = all_in.col(c);
      tgt.col(static_cast<Index>(j)) = xb_n.row(ks[static_cast<std::size_t>(c)]).transpose();
    }
    const ad::NodeId out = tape_resnet(t, "enc.b", enc.base_head, t.constant(in));
    return t.scale(t.sqnorm(t.sub(out, t.constant(tgt))), 1.0 / static_cast<double>(cnt * nxb));
  };

  Adam opt(cfg, p.size());
  const Vec mask = p.trainable_mask();
  std::vector<Index> order(ks.size());
  std::iota(order.begin(), order.end(), 0);
  ad::Tape t;
  const std::size_t B = static_cast<std::size_t>(cfg.encoder_batch);
  for (Index e = 0; e < cfg.encoder_epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t off = 0; off < order.size(); off += B) {
      const std::size_t cnt = std::min(B, order.size() - off);
      t.reset(&p);
      const ad::NodeId l = batch_loss(t, order, off, cnt);
      Vec g = Vec::Zero(p.size());
      t.backward(l, g);
      opt.step(p.values, g, mask);
    }
  }
  unpack_resnet(p, "enc.b", enc.base_head);

  std::vector<Index> all(ks.size());
  std::iota(all.begin(), all.end(), 0);
  t.reset(&p);
  return t.scalar_value(batch_loss(t, all, 0, all.size()));
}

// ---- initialization --------------------------------------------------------

namespace {

// The z_a row (global index) of block b that carries the signal selected by
// a (row, col) entry: finds j in the block with blk(j, col) != 0.
Index find_block_row(const AugBlock& b, const Mat& blk, Index col) {
  for (Index j = 0; j < b.z_size; ++j)
    if (blk(b.z_offset + j, col) != 0.0) return j;
  return -1;
}

Index find_selected(const Mat& m, Index row) {
  for (Index c = 0; c < m.cols(); ++c)
    if (m(row, c) != 0.0) return c;
  return -1;
}

void init_structured(AugmentedModel& m, std::mt19937_64& rng) {
  const Index nxb = m.dims.n_x_b;
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  const LfrMatrix& W = m.W;
  for (auto& b : m.aug.blocks) {
    b.net.init_xavier(rng, true);
    b.net.bypass.setZero();
    for (const Head& h : b.heads) {
      for (Index i = 0; i < h.size; ++i) {
        const Index wcol = b.w_offset + h.offset + i;  // global w_a index
        const Index r = h.offset + i;                   // row of this net
        Index src = -1;
        if (h.role == "f") {
          // Series output: pass f_base through from its z_a slot.
          const Index xr = find_selected(W[Blk::B_w_a].transpose(), wcol);
          if (xr >= 0) src = find_block_row(b, W[Blk::D_zw_ab], xr);
        } else if (h.role == "h") {
          const Index yr = find_selected(W[Blk::D_yw_a].transpose(), wcol);
          if (yr >= 0) src = find_block_row(b, W[Blk::D_zw_ab], nxb + yr);
        } else if (h.role == "shape_z" || h.role == "shape_x" || h.role == "shape_u") {
          // Identity shaping: output whatever z_b would have held unshaped.
          const Index zr = find_selected(W[Blk::D_zw_ba].transpose(), wcol);
          if (zr >= 0 && zr < nxb) {
            src = find_block_row(b, W[Blk::C_z_a], zr);
          } else if (zr >= nxb) {
            src = find_block_row(b, W[Blk::D_zu_a], zr - nxb);
          }
        } else if (h.role == "g") {
          for (Index c = 0; c < b.z_size; ++c) b.net.bypass(r, c) = small(rng);
          continue;
        }
        if (src >= 0) b.net.bypass(r, src) = 1.0;
      }
    }
  }
}

void init_flexible(AugmentedModel& m, std::mt19937_64& rng) {
  const Dimensions& d = m.dims;
  const Index nxb = d.n_x_b, nxa = d.n_x_a;
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto fill = [&](Mat& x) {
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) x(i, j) = U(rng);
  };
  LfrMatrix& W = m.W;
  W = LfrMatrix::zeros(d);
  for (Index i = 0; i < nxb; ++i) W[Blk::C_z_b](i, i) = 1.0;
  for (Index i = 0; i < d.n_u; ++i) W[Blk::D_zu_b](nxb + i, i) = 1.0;
  for (Index i = 0; i < nxb; ++i) W[Blk::B_w_b](i, i) = 1.0;
  for (Index i = 0; i < d.n_y; ++i) W[Blk::D_yw_b](i, nxb + i) = 1.0;

  // Augmented-state rows and the z_a rows are free.
  for (Blk b : {Blk::A, Blk::B_u, Blk::B_w_b, Blk::B_w_a}) {
    if (nxa == 0) continue;
    Mat rows(nxa, W[b].cols());
    fill(rows);
    W[b].bottomRows(nxa) = rows;
  }
  fill(W[Blk::C_z_a]);
  fill(W[Blk::D_zu_a]);
  if (m.mode == DzwMode::AbOnly) fill(W[Blk::D_zw_ab]);

  for (auto& b : m.aug.blocks) {
    b.net.init_xavier(rng, true);
    fill(b.net.bypass);
  }

  // Keep the augmented-state recursion contractive at start.
  if (nxa > 0 && d.n_w_a > 0) {
    const Mat Wa = m.aug.blocks.size() == 1 ? m.aug.blocks.front().net.bypass : Mat::Zero(d.n_w_a, d.n_z_a);
    const Mat M = W[Blk::A].bottomRightCorner(nxa, nxa) +
                  W[Blk::B_w_a].bottomRows(nxa) * Wa * W[Blk::C_z_a].rightCols(nxa);
    const double rho = M.eigenvalues().cwiseAbs().maxCoeff();
    if (rho > 0.9) {
      const double s = 0.9 / rho;
      W[Blk::A].bottomRows(nxa) *= s;
      W[Blk::B_w_a].bottomRows(nxa) *= s;
    }
  }
  // Pinned selectors stay as they are; trainable-but-unused blocks are zero.
  for (int i = 0; i < kNumBlocks; ++i) {
    if (!mode_allows(m.mode, static_cast<Blk>(i))) m.W.blocks[i].setZero();
  }
}

}  // namespace

void init_baseline_equivalent(AugmentedModel& m, std::uint64_t seed) {
  if (m.mode == DzwMode::Unrestricted) {
    throw ModeError("initialization: Unrestricted D_zw cannot be made baseline-equivalent");
  }
  if (!m.base) throw ConfigError("initialization: model has no baseline");
  std::mt19937_64 rng(seed);
  if (m.structure == "flexible") {
    init_flexible(m, rng);
  } else {
    init_structured(m, rng);
  }
  m.theta_base = m.theta_base0;
  m.validate();
}

// ---- losses ----------------------------------------------------------------

double truncated_loss(const AugmentedModel& m, const Mat& u_n, const Mat& y_n,
                      const std::vector<Index>& starts, Index T) {
  const ad::ParamVector p = pack_params(m);
  return loss_and_grad(m, p, u_n, y_n, starts, T, 0.0, false).truncated;
}

double regularized_loss(const AugmentedModel& m, const Mat& u_n, const Mat& y_n,
                        const std::vector<Index>& starts, Index T, double lambda) {
  const ad::ParamVector p = pack_params(m);
  return loss_and_grad(m, p, u_n, y_n, starts, T, lambda, false).loss;
}

std::vector<Index> tiled_starts(Index N, Index lag, Index T) {
  std::vector<Index> s;
  for (Index k = lag; k + T <= N; k += T) s.push_back(k);
  return s;
}

// ---- evaluation ------------------------------------------------------------

Metric parse_metric(const std::string& s) {
  if (s == "rmse" || s == "RMSE") return Metric::RMSE;
  if (s == "nrms" || s == "NRMS") return Metric::NRMS;
  throw ConfigError("unknown metric '" + s + "' (rmse|nrms)");
}

namespace {

EvalResult score(const Mat& y_hat, const Mat& y, Index horizon, bool diverged) {
  EvalResult r;
  r.diverged = diverged;
  r.horizon = horizon;
  if (horizon == 0) {
    r.rmse = r.nrms = std::numeric_limits<double>::infinity();
    return r;
  }
  const Mat e = y_hat.topRows(horizon) - y.topRows(horizon);
  r.rmse = std::sqrt(e.array().square().mean());
  const Vec sd = col_std(y);
  double nr = 0.0;
  for (Index c = 0; c < y.cols(); ++c) {
    const double rc = std::sqrt(e.col(c).array().square().mean());
    nr += sd(c) > 0.0 ? rc / sd(c) : std::numeric_limits<double>::infinity();
  }
  r.nrms = 100.0 * nr / static_cast<double>(y.cols());
  return r;
}

}  // namespace

EvalResult evaluate(const AugmentedModel& m, const Dataset& data_n) {
  const EncoderNet& enc = m.encoder;
  const Index lag = enc.lag(), N = data_n.size();
  if (data_n.n_u() != m.dims.n_u || data_n.n_y() != m.dims.n_y) {
    throw DimensionError("evaluate: dataset channels do not match the model");
  }
  if (N <= lag) throw DataError("evaluate: dataset shorter than the encoder lag");
  const Vec x0 = encoder_estimate(enc, data_n.y.block(lag - enc.n_a, 0, enc.n_a, m.dims.n_y),
                                  data_n.u.block(lag - enc.n_b, 0, enc.n_b, m.dims.n_u));
  const Index L = N - lag;
  Mat yh_n(L, m.dims.n_y);
  Vec x = x0;
  Index horizon = L;
  bool diverged = false;
  for (Index k = 0; k < L; ++k) {
    StepResult r;
    try {
      r = step(m, x, data_n.u.row(lag + k).transpose());
    } catch (const NumericError&) {
      horizon = k;
      diverged = true;
      break;
    }
    yh_n.row(k) = r.y.transpose();
    x = r.x_next;
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound) {
      horizon = k + 1;
      diverged = true;
      break;
    }
  }
  const Mat y = m.norm.denormalize_y(data_n.y.bottomRows(L));
  const Mat yh = m.norm.denormalize_y(yh_n);
  return score(yh, y, horizon, diverged);
}

double evaluate(const AugmentedModel& m, const Dataset& data_n, Metric metric) {
  const EvalResult r = evaluate(m, data_n);
  return metric == Metric::RMSE ? r.rmse : r.nrms;
}

EvalResult baseline_simulation_error(const BaselineComponent& base, const Vec& theta,
                                     const Dataset& raw, Index skip) {
  const Index N = raw.size(), nx = base.n_x();
  Mat yh(N, base.n_y());
  Vec x = Vec::Zero(nx), z(base.n_z());
  for (Index k = 0; k < N; ++k) {
    z.head(nx) = x;
    z.tail(base.n_u()) = raw.u.row(k).transpose();
    const Vec w = base.eval(theta, z);
    yh.row(k) = w.tail(base.n_y()).transpose();
    x = w.head(nx);
  }
  return score(yh.bottomRows(N - skip), raw.y.bottomRows(N - skip), N - skip, false);
}

// ---- training loop ---------------------------------------------------------

TrainRun train(AugmentedModel& m, const Dataset& est_n, const Dataset& val_n,
               const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const Index lag = m.encoder.lag();
  const Index N = est_n.size();
  if (N - cfg.T < lag) throw DataError("estimation split too short for T and the encoder lag");
  TrainRun run;
  ad::ParamVector p = pack_params(m);
  const Vec mask = p.trainable_mask();
  Adam opt(cfg, p.size());
  std::mt19937_64 rng(derive_seed(cfg.seed, 7));

  std::vector<Index> starts(static_cast<std::size_t>(N - cfg.T - lag + 1));
  std::iota(starts.begin(), starts.end(), lag);
  const std::vector<Index> val_starts = tiled_starts(val_n.size(), lag, cfg.T);

  auto validate_now = [&](EpochRecord& rec) {
    unpack_params(p, m);
    const EvalResult ev = evaluate(m, val_n);
    rec.val_rmse = ev.diverged ? std::numeric_limits<double>::infinity() : ev.rmse;
    rec.val_trunc_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_starts.empty()) {
      try {
        rec.val_trunc_loss = loss_and_grad(m, p, val_n.u, val_n.y, val_starts, cfg.T, 0.0, false, cfg.chunk).truncated;
      } catch (const NumericError&) {
        rec.val_trunc_loss = std::numeric_limits<double>::infinity();
      }
    }
    return !ev.diverged;
  };

  EpochRecord init;
  validate_now(init);
  run.best_epoch = 0;
  run.best_val_rmse = init.val_rmse;
  run.best_params = p;
  init.train_loss = init.reg_term = std::numeric_limits<double>::quiet_NaN();
  run.history.push_back(init);
  if (on_epoch) on_epoch(init);
  Index bad_val = 0;

  for (Index e = 1; e <= cfg.epochs; ++e) {
    std::shuffle(starts.begin(), starts.end(), rng);
    EpochRecord rec;
    rec.epoch = e;
    double sum = 0.0;
    Index nb = 0;
    for (std::size_t off = 0; off < starts.size(); off += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t cnt = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), starts.size() - off);
      const std::vector<Index> batch(starts.begin() + static_cast<std::ptrdiff_t>(off),
                                     starts.begin() + static_cast<std::ptrdiff_t>(off + cnt));
      LossValue lv;
      try {
        lv = loss_and_grad(m, p, est_n.u, est_n.y, batch, cfg.T, cfg.lambda, true, cfg.chunk);
      } catch (const NumericError& ex) {
        run.aborted = true;
        run.abort_reason = "non-finite loss at epoch " + std::to_string(e) + " batch " +
                           std::to_string(nb) + ": " + ex.what();
        break;
      }
      if (!std::isfinite(lv.loss) || !lv.grad.allFinite()) {
        run.aborted = true;
        run.abort_reason = "non-finite loss at epoch " + std::to_string(e) + " batch " + std::to_string(nb);
        break;
      }
      opt.step(p.values, lv.grad, mask);
      sum += lv.truncated;
      rec.reg_term = lv.reg;
      ++nb;
    }
    if (run.aborted) break;
    rec.train_loss = nb > 0 ? sum / static_cast<double>(nb) : 0.0;
    run.theta_trace.push_back(p.get_vec("theta_base"));

    if (e % cfg.val_every == 0 || e == cfg.epochs) {
      const bool ok = validate_now(rec);
      if (ok && rec.val_rmse < run.best_val_rmse) {
        run.best_val_rmse = rec.val_rmse;
        run.best_epoch = e;
        run.best_params = p;
      }
      bad_val = ok ? 0 : bad_val + 1;
    } else {
      rec.val_rmse = rec.val_trunc_loss = std::numeric_limits<double>::quiet_NaN();
    }
    run.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (bad_val >= 5) {
      run.aborted = true;
      run.abort_reason = "validation simulation diverged 5 times in a row (epoch " + std::to_string(e) + ")";
      break;
    }
  }
  unpack_params(run.best_params, m);
  return run;
}

void write_metrics_csv(const TrainRun& run, const std::string& path, const nlohmann::json& header) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw DataError("cannot write " + path);
  if (!header.is_null()) std::fprintf(f, "# config: %s\n", header.dump().c_str());
  std::fprintf(f, "epoch,train_loss,reg_term,val_rmse,val_trunc_loss\n");
  for (const auto& r : run.history) {
    std::fprintf(f, "%lld,%.10g,%.10g,%.10g,%.10g\n", static_cast<long long>(r.epoch), r.train_loss,
                 r.reg_term, r.val_rmse, r.val_trunc_loss);
  }
  std::fclose(f);
}

// ---- pipeline --------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.structure = j.value("structure", c.structure);
  c.n_x_a = j.value("n_x_a", c.n_x_a);
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("mode")) c.flexible_mode = parse_dzw_mode(j.at("mode").get<std::string>());
  c.n_z_a = j.value("n_z_a", c.n_z_a);
  c.n_w_a = j.value("n_w_a", c.n_w_a);
  c.fix_zb = j.value("fix_zb", c.fix_zb);
  c.n_est = j.value("n_est", c.n_est);
  if (j.contains("training")) c.train = TrainingConfig::from_json(j.at("training"));
  if (c.structure != "flexible") (void)parse_structure(c.structure, c.n_x_a);
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"structure", structure}, {"n_x_a", n_x_a},   {"hidden", hidden},
          {"mode", to_string(flexible_mode)}, {"n_z_a", n_z_a}, {"n_w_a", n_w_a},
          {"fix_zb", fix_zb},       {"n_est", n_est},   {"training", train.to_json()}};
}

AugmentedModel build_model(const ExperimentConfig& cfg, BaselinePtr base) {
  if (cfg.structure == "flexible") {
    return make_flexible_model(std::move(base), cfg.n_x_a, cfg.n_z_a, cfg.n_w_a, cfg.flexible_mode,
                               cfg.hidden, cfg.fix_zb);
  }
  return make_structured_model(parse_structure(cfg.structure, cfg.n_x_a), std::move(base), cfg.hidden);
}

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(BaselinePtr base, const Dataset& est_raw, const Dataset& val_raw,
                            const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
  const TrainingConfig& tc = cfg.train;
  const Index lag = std::max(tc.n_a, tc.n_b);
  PipelineResult res;

  const Dataset est = cfg.n_est > 0 && cfg.n_est < est_raw.size() ? est_raw.head(cfg.n_est) : est_raw;
  NormalizationTransforms norm = stage("normalize", [&] { return fit_normalization(est); });
  const BaselineStates states = stage("simulate_baseline", [&] {
    return simulate_baseline_states(*base, est, base->nominal_theta(), lag);
  });
  norm.x_std = states.x_std;
  const BaselinePtr wrapped = stage("wrap", [&] { return wrap_baseline_normalized(base, norm); });

  res.est_n = normalize_dataset(states.extended, norm);
  res.val_n = normalize_dataset(val_raw, norm);

  res.model = stage("build", [&] {
    AugmentedModel m = build_model(cfg, wrapped);
    m.norm = norm;
    m.encoder = EncoderNet(tc.n_a, tc.n_b, m.dims.n_y, m.dims.n_u, m.dims.n_x_b, m.dims.n_x_a,
                           tc.encoder_hidden);
    return m;
  });

  res.encoder_mse = stage("pretrain_encoder", [&] {
    std::mt19937_64 rng(derive_seed(tc.seed, 11));
    return pretrain_encoder(res.model.encoder, res.est_n.u, res.est_n.y, res.est_n.x_base, tc, rng);
  });
  stage("init", [&] { init_baseline_equivalent(res.model, derive_seed(tc.seed, 12)); });
  res.init_model = res.model;
  res.run = stage("train", [&] { return train(res.model, res.est_n, res.val_n, tc, on_epoch); });
  return res;
}

}  // namespace lfr
