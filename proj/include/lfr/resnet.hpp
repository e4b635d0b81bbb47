#pragma once

#include "lfr/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace lfr {

// Feedforward tanh network with a linear bypass:
//   xi_0 = z, xi_i = tanh(W_i xi_{i-1} + b_i), out = W_out xi_q + b_out + W_a z.
// weights/biases hold q+1 layers; the last one is the output layer.
struct ResNet {
  std::vector<Index> widths;  // [n_in, m_1, ..., m_q, n_out]
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  Mat bypass;  // W_a, n_out x n_in

  ResNet() = default;
  // All parameters start at zero.
  ResNet(Index n_in, const std::vector<Index>& hidden, Index n_out);

  Index n_in() const { return widths.empty() ? 0 : widths.front(); }
  Index n_out() const { return widths.empty() ? 0 : widths.back(); }
  Index hidden_layers() const { return widths.empty() ? 0 : static_cast<Index>(widths.size()) - 2; }
  Index n_params() const;

  Vec eval(const Vec& z) const;
  Mat jacobian(const Vec& z) const;

  // Xavier-uniform hidden layers; output layer and bias either zeroed or
  // Xavier as well. The bypass is left untouched.
  void init_xavier(std::mt19937_64& rng, bool zero_output_layer);
  bool finite() const;
};

// One output range of the learning component together with its role, so
// initialization and checkpoints know what each row means.
struct Head {
  std::string role;  // "f", "g", "h", "shape_z", "shape_x", "shape_u", "free"
  Index offset = 0;  // within the owning block's output
  Index size = 0;
};

// phi_aug as a block-diagonal stack of ResNets: block i reads
// z_a[z_offset, z_offset + z_size) and writes w_a[w_offset, w_offset + w_size).
struct AugBlock {
  std::string name;
  Index z_offset = 0, z_size = 0;
  Index w_offset = 0, w_size = 0;
  std::vector<Head> heads;
  ResNet net;
};

struct LearningComponent {
  std::vector<AugBlock> blocks;

  Index n_in() const;
  Index n_out() const;
  Vec eval(const Vec& z) const;
  Mat jacobian(const Vec& z) const;
  // Structural dependence of w_a on z_a: all-true inside each block.
  BoolMat pattern() const;
  // Blocks must tile z_a and w_a without gaps or overlaps.
  void validate(Index n_z_a, Index n_w_a) const;
  const AugBlock* find(const std::string& name) const;
};

// Single-block learning component over the whole of z_a.
LearningComponent dense_learning_component(Index n_z_a, Index n_w_a,
                                           const std::vector<Index>& hidden);

// psi: (y_{k-n_a}..y_{k-1}, u_{k-n_b}..u_{k-1}) -> [x_b; x_a]. The input is
// flattened oldest-first, sample by sample: all y lags, then all u lags.
struct EncoderNet {
  Index n_a = 0, n_b = 0, n_y = 0, n_u = 0;
  ResNet base_head;  // psi_b, n_x_b outputs
  ResNet aug_head;   // psi_a, n_x_a outputs (empty when n_x_a = 0)

  EncoderNet() = default;
  EncoderNet(Index n_a, Index n_b, Index n_y, Index n_u, Index n_x_b, Index n_x_a,
             const std::vector<Index>& hidden);

  Index input_size() const { return n_a * n_y + n_b * n_u; }
  Index n_x_b() const { return base_head.n_out(); }
  Index n_x_a() const { return aug_head.n_out(); }
  Index lag() const { return std::max(n_a, n_b); }

  Vec estimate_flat(const Vec& input) const;
};

// y_hist is (n_a x n_y), u_hist (n_b x n_u), one row per sample oldest-first.
Vec encoder_input(const EncoderNet& enc, const Mat& y_hist, const Mat& u_hist);
Vec encoder_estimate(const EncoderNet& enc, const Mat& y_hist, const Mat& u_hist);

}  // namespace lfr
