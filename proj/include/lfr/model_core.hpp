#pragma once

#include "lfr/baseline.hpp"
#include "lfr/normalization.hpp"
#include "lfr/resnet.hpp"
#include "lfr/types.hpp"

#include <array>
#include <map>
#include <string>

namespace lfr {

struct Dimensions {
  Index n_x_b = 1;
  Index n_x_a = 0;
  Index n_u = 1;
  Index n_y = 1;
  Index n_z_a = 0;
  Index n_w_a = 0;

  Index n_x() const { return n_x_b + n_x_a; }
  Index n_z_b() const { return n_x_b + n_u; }
  Index n_w_b() const { return n_x_b + n_y; }
  void validate() const;
  bool operator==(const Dimensions& o) const;
};

enum class DzwMode { Zero, AbOnly, BaOnly, Unrestricted };

std::string to_string(DzwMode mode);
DzwMode parse_dzw_mode(const std::string& s);

// Row groups: x, y, z_b, z_a. Column groups: x, u, w_b, w_a.
// Block index = 4 * row group + column group.
enum class Blk : int {
  A, B_u, B_w_b, B_w_a,
  C_y, D_yu, D_yw_b, D_yw_a,
  C_z_b, D_zu_b, D_zw_bb, D_zw_ba,
  C_z_a, D_zu_a, D_zw_ab, D_zw_aa,
};
constexpr int kNumBlocks = 16;

const char* block_name(Blk b);
Blk parse_block(const std::string& name);
bool is_dzw(Blk b);
// Whether mode allows the block to be nonzero.
bool mode_allows(DzwMode mode, Blk b);
Index block_rows(const Dimensions& d, Blk b);
Index block_cols(const Dimensions& d, Blk b);

struct LfrMatrix {
  std::array<Mat, kNumBlocks> blocks;

  Mat& operator[](Blk b) { return blocks[static_cast<int>(b)]; }
  const Mat& operator[](Blk b) const { return blocks[static_cast<int>(b)]; }

  static LfrMatrix zeros(const Dimensions& d);
  // Full (n_x + n_y + n_z_b + n_z_a) x (n_x + n_u + n_w_b + n_w_a) matrix.
  Mat dense() const;
  void validate(const Dimensions& d) const;
};

LfrMatrix lfr_assemble(const Dimensions& dims, const std::map<std::string, Mat>& blocks,
                       DzwMode mode);

using TrainableMask = std::array<bool, kNumBlocks>;

struct AugmentedModel {
  Dimensions dims;
  LfrMatrix W;
  DzwMode mode = DzwMode::Zero;
  TrainableMask trainable{};  // per W block
  BaselinePtr base;
  Vec theta_base;
  Vec theta_base0;  // nominal values the regularizer pulls toward
  bool theta_base_trainable = true;
  LearningComponent aug;
  EncoderNet encoder;
  NormalizationTransforms norm;
  std::string structure = "flexible";

  Index n_x() const { return dims.n_x(); }
  // Shapes, modes, component sizes. Does not run the graph analysis.
  void validate() const;
};

struct LatentSignals {
  Vec z_b, z_a, w_b, w_a;
};

struct StepResult {
  Vec x_next;
  Vec y;
};

struct Trajectory {
  Mat y;  // L x n_y
  Mat x;  // (L + 1) x n_x
};

LatentSignals solve_latent(const AugmentedModel& m, const Vec& x, const Vec& u);
StepResult step(const AugmentedModel& m, const Vec& x, const Vec& u);
// u_seq has one row per time step. Throws DivergenceError once any state
// entry exceeds 1e12 in magnitude.
Trajectory simulate(const AugmentedModel& m, const Vec& x0, const Mat& u_seq);

// max |residual| of the latent loop equations for the given signals.
double latent_residual(const AugmentedModel& m, const Vec& x, const Vec& u,
                       const LatentSignals& s);

constexpr double kDivergenceBound = 1e12;

}  // namespace lfr
