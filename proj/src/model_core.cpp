#include "lfr/model_core.hpp"

#include <cmath>

namespace lfr {

void Dimensions::validate() const {
  if (n_x_b < 1 || n_u < 1 || n_y < 1) throw DimensionError("dims: n_x_b, n_u and n_y must be >= 1");
  if (n_x_a < 0 || n_z_a < 0 || n_w_a < 0) throw DimensionError("dims: counts must be >= 0");
}

bool Dimensions::operator==(const Dimensions& o) const {
  return n_x_b == o.n_x_b && n_x_a == o.n_x_a && n_u == o.n_u && n_y == o.n_y &&
         n_z_a == o.n_z_a && n_w_a == o.n_w_a;
}

std::string to_string(DzwMode mode) {
  switch (mode) {
    case DzwMode::Zero: return "Zero";
    case DzwMode::AbOnly: return "AbOnly";
    case DzwMode::BaOnly: return "BaOnly";
    case DzwMode::Unrestricted: return "Unrestricted";
  }
  return "?";
}

DzwMode parse_dzw_mode(const std::string& s) {
  if (s == "Zero") return DzwMode::Zero;
  if (s == "AbOnly") return DzwMode::AbOnly;
  if (s == "BaOnly") return DzwMode::BaOnly;
  if (s == "Unrestricted") return DzwMode::Unrestricted;
  throw ConfigError("unknown D_zw mode '" + s + "'");
}

namespace {

constexpr const char* kBlockNames[kNumBlocks] = {
    "A",     "B_u",    "B_w_b",   "B_w_a",   "C_y",   "D_yu",   "D_yw_b",  "D_yw_a",
    "C_z_b", "D_zu_b", "D_zw_bb", "D_zw_ba", "C_z_a", "D_zu_a", "D_zw_ab", "D_zw_aa"};

Index group_rows(const Dimensions& d, int g) {
  switch (g) {
    case 0: return d.n_x();
    case 1: return d.n_y;
    case 2: return d.n_z_b();
    default: return d.n_z_a;
  }
}

Index group_cols(const Dimensions& d, int g) {
  switch (g) {
    case 0: return d.n_x();
    case 1: return d.n_u;
    case 2: return d.n_w_b();
    default: return d.n_w_a;
  }
}

}  // namespace

const char* block_name(Blk b) { return kBlockNames[static_cast<int>(b)]; }

Blk parse_block(const std::string& name) {
  for (int i = 0; i < kNumBlocks; ++i)
    if (name == kBlockNames[i]) return static_cast<Blk>(i);
  throw ConfigError("unknown LFR block '" + name + "'");
}

bool is_dzw(Blk b) {
  return b == Blk::D_zw_bb || b == Blk::D_zw_ba || b == Blk::D_zw_ab || b == Blk::D_zw_aa;
}

bool mode_allows(DzwMode mode, Blk b) {
  if (!is_dzw(b)) return true;
  switch (mode) {
    case DzwMode::Zero: return false;
    case DzwMode::AbOnly: return b == Blk::D_zw_ab;
    case DzwMode::BaOnly: return b == Blk::D_zw_ba;
    case DzwMode::Unrestricted: return true;
  }
  return false;
}

Index block_rows(const Dimensions& d, Blk b) { return group_rows(d, static_cast<int>(b) / 4); }
Index block_cols(const Dimensions& d, Blk b) { return group_cols(d, static_cast<int>(b) % 4); }

LfrMatrix LfrMatrix::zeros(const Dimensions& d) {
  LfrMatrix w;
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    w.blocks[i] = Mat::Zero(block_rows(d, b), block_cols(d, b));
  }
  return w;
}

Mat LfrMatrix::dense() const {
  Index rows = 0, cols = 0;
  for (int g = 0; g < 4; ++g) rows += blocks[4 * g].rows();
  for (int g = 0; g < 4; ++g) cols += blocks[g].cols();
  Mat m(rows, cols);
  Index r0 = 0;
  for (int rg = 0; rg < 4; ++rg) {
    Index c0 = 0;
    for (int cg = 0; cg < 4; ++cg) {
      const Mat& blk = blocks[4 * rg + cg];
      m.block(r0, c0, blk.rows(), blk.cols()) = blk;
      c0 += blk.cols();
    }
    r0 += blocks[4 * rg].rows();
  }
  return m;
}

void LfrMatrix::validate(const Dimensions& d) const {
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    if (blocks[i].rows() != block_rows(d, b) || blocks[i].cols() != block_cols(d, b)) {
      throw DimensionError(std::string("block ") + block_name(b) + " must be " +
                           std::to_string(block_rows(d, b)) + "x" + std::to_string(block_cols(d, b)) +
                           ", got " + std::to_string(blocks[i].rows()) + "x" +
                           std::to_string(blocks[i].cols()));
    }
    if (!blocks[i].allFinite()) {
      throw NumericError(std::string("block ") + block_name(b) + " has non-finite entries");
    }
  }
}

LfrMatrix lfr_assemble(const Dimensions& dims, const std::map<std::string, Mat>& blocks,
                       DzwMode mode) {
  dims.validate();
  LfrMatrix w = LfrMatrix::zeros(dims);
  for (const auto& [name, value] : blocks) {
    const Blk b = parse_block(name);
    if (value.rows() != block_rows(dims, b) || value.cols() != block_cols(dims, b)) {
      throw DimensionError("block " + name + " must be " + std::to_string(block_rows(dims, b)) + "x" +
                           std::to_string(block_cols(dims, b)) + ", got " +
                           std::to_string(value.rows()) + "x" + std::to_string(value.cols()));
    }
    if (!mode_allows(mode, b) && (value.array() != 0.0).any()) {
      throw ModeError("block " + name + " must be zero under mode " + to_string(mode));
    }
    w[b] = value;
  }
  w.validate(dims);
  return w;
}

void AugmentedModel::validate() const {
  dims.validate();
  W.validate(dims);
  for (int i = 0; i < kNumBlocks; ++i) {
    const Blk b = static_cast<Blk>(i);
    if (mode_allows(mode, b)) continue;
    if (trainable[i] || (W[b].array() != 0.0).any()) {
      throw ModeError(std::string("block ") + block_name(b) + " is not allowed under mode " +
                      to_string(mode));
    }
  }
  if (!base) throw ConfigError("model has no baseline component");
  if (base->n_x() != dims.n_x_b || base->n_u() != dims.n_u || base->n_y() != dims.n_y) {
    throw DimensionError("baseline dimensions do not match the model");
  }
  if (theta_base.size() != base->n_theta() || theta_base0.size() != base->n_theta()) {
    throw DimensionError("theta_base length does not match the baseline");
  }
  if (dims.n_z_a > 0 || dims.n_w_a > 0) aug.validate(dims.n_z_a, dims.n_w_a);
  if (encoder.n_a + encoder.n_b > 0) {
    if (encoder.n_x_b() != dims.n_x_b || encoder.n_x_a() != dims.n_x_a ||
        encoder.n_u != dims.n_u || encoder.n_y != dims.n_y) {
      throw DimensionError("encoder dimensions do not match the model");
    }
  }
}

namespace {

void check_inputs(const AugmentedModel& m, const Vec& x, const Vec& u) {
  if (x.size() != m.dims.n_x()) throw DimensionError("state has wrong length");
  if (u.size() != m.dims.n_u) throw DimensionError("input has wrong length");
}

}  // namespace

LatentSignals solve_latent(const AugmentedModel& m, const Vec& x, const Vec& u) {
  check_inputs(m, x, u);
  const LfrMatrix& W = m.W;
  LatentSignals s;
  switch (m.mode) {
    case DzwMode::Zero:
      s.z_b = W[Blk::C_z_b] * x + W[Blk::D_zu_b] * u;
      s.z_a = W[Blk::C_z_a] * x + W[Blk::D_zu_a] * u;
      s.w_b = m.base->eval(m.theta_base, s.z_b);
      s.w_a = m.aug.eval(s.z_a);
      break;
    case DzwMode::AbOnly:
      s.z_b = W[Blk::C_z_b] * x + W[Blk::D_zu_b] * u;
      s.w_b = m.base->eval(m.theta_base, s.z_b);
      s.z_a = W[Blk::C_z_a] * x + W[Blk::D_zu_a] * u + W[Blk::D_zw_ab] * s.w_b;
      s.w_a = m.aug.eval(s.z_a);
      break;
    case DzwMode::BaOnly:
      s.z_a = W[Blk::C_z_a] * x + W[Blk::D_zu_a] * u;
      s.w_a = m.aug.eval(s.z_a);
      s.z_b = W[Blk::C_z_b] * x + W[Blk::D_zu_b] * u + W[Blk::D_zw_ba] * s.w_a;
      s.w_b = m.base->eval(m.theta_base, s.z_b);
      break;
    case DzwMode::Unrestricted:
      throw ModeError("solve_latent: Unrestricted D_zw has no substitution order");
  }
  if (s.w_a.size() != m.dims.n_w_a) s.w_a = Vec::Zero(m.dims.n_w_a);
  return s;
}

StepResult step(const AugmentedModel& m, const Vec& x, const Vec& u) {
  const LatentSignals s = solve_latent(m, x, u);
  const LfrMatrix& W = m.W;
  StepResult r;
  r.x_next = W[Blk::A] * x + W[Blk::B_u] * u + W[Blk::B_w_b] * s.w_b + W[Blk::B_w_a] * s.w_a;
  r.y = W[Blk::C_y] * x + W[Blk::D_yu] * u + W[Blk::D_yw_b] * s.w_b + W[Blk::D_yw_a] * s.w_a;
  if (!r.x_next.allFinite() || !r.y.allFinite()) throw NumericError("step produced non-finite values");
  return r;
}

Trajectory simulate(const AugmentedModel& m, const Vec& x0, const Mat& u_seq) {
  if (u_seq.rows() < 1) throw DimensionError("simulate: need at least one input sample");
  if (u_seq.cols() != m.dims.n_u) throw DimensionError("simulate: input channel count mismatch");
  const Index L = u_seq.rows();
  Trajectory t;
  t.y.resize(L, m.dims.n_y);
  t.x.resize(L + 1, m.dims.n_x());
  t.x.row(0) = x0.transpose();
  Vec x = x0;
  for (Index k = 0; k < L; ++k) {
    StepResult r;
    try {
      r = step(m, x, u_seq.row(k).transpose());
    } catch (const NumericError&) {
      throw DivergenceError("simulation diverged at step " + std::to_string(k),
                            static_cast<std::size_t>(k));
    }
    if (r.x_next.cwiseAbs().maxCoeff() > kDivergenceBound) {
      throw DivergenceError("simulation diverged at step " + std::to_string(k),
                            static_cast<std::size_t>(k));
    }
    t.y.row(k) = r.y.transpose();
    x = r.x_next;
    t.x.row(k + 1) = x.transpose();
  }
  return t;
}

double latent_residual(const AugmentedModel& m, const Vec& x, const Vec& u,
                       const LatentSignals& s) {
  const LfrMatrix& W = m.W;
  const Vec rzb = W[Blk::C_z_b] * x + W[Blk::D_zu_b] * u + W[Blk::D_zw_bb] * s.w_b +
                  W[Blk::D_zw_ba] * s.w_a - s.z_b;
  const Vec rza = W[Blk::C_z_a] * x + W[Blk::D_zu_a] * u + W[Blk::D_zw_ab] * s.w_b +
                  W[Blk::D_zw_aa] * s.w_a - s.z_a;
  const Vec rwb = m.base->eval(m.theta_base, s.z_b) - s.w_b;
  const Vec rwa = m.aug.eval(s.z_a) - s.w_a;
  double r = 0.0;
  for (const Vec* v : {&rzb, &rza, &rwb, &rwa})
    if (v->size() > 0) r = std::max(r, v->cwiseAbs().maxCoeff());
  return r;
}

}  // namespace lfr
