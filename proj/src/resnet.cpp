#include "lfr/resnet.hpp"

#include <algorithm>
#include <cmath>

namespace lfr {

ResNet::ResNet(Index n_in, const std::vector<Index>& hidden, Index n_out) {
  if (n_in < 0 || n_out < 0) throw DimensionError("ResNet: negative width");
  widths.push_back(n_in);
  for (Index m : hidden) {
    if (m < 1) throw DimensionError("ResNet: hidden widths must be >= 1");
    widths.push_back(m);
  }
  widths.push_back(n_out);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    weights.push_back(Mat::Zero(widths[i + 1], widths[i]));
    biases.push_back(Vec::Zero(widths[i + 1]));
  }
  bypass = Mat::Zero(n_out, n_in);
}

Index ResNet::n_params() const {
  Index n = bypass.size();
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

Vec ResNet::eval(const Vec& z) const {
  if (widths.empty()) return Vec();
  if (z.size() != n_in()) throw DimensionError("ResNet::eval: input has wrong length");
  Vec xi = z;
  const std::size_t q = weights.size() - 1;
  for (std::size_t i = 0; i < q; ++i) {
    xi = (weights[i] * xi + biases[i]).array().tanh().matrix();
  }
  return weights[q] * xi + biases[q] + bypass * z;
}

Mat ResNet::jacobian(const Vec& z) const {
  if (widths.empty()) return Mat();
  Vec xi = z;
  Mat dxi = Mat::Identity(n_in(), n_in());
  const std::size_t q = weights.size() - 1;
  for (std::size_t i = 0; i < q; ++i) {
    xi = (weights[i] * xi + biases[i]).array().tanh().matrix();
    const Vec d = (1.0 - xi.array().square()).matrix();
    dxi = d.asDiagonal() * (weights[i] * dxi);
  }
  return weights[q] * dxi + bypass;
}

void ResNet::init_xavier(std::mt19937_64& rng, bool zero_output_layer) {
  const std::size_t q = weights.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (i == q && zero_output_layer) {
      weights[i].setZero();
      biases[i].setZero();
      continue;
    }
    const double fan = static_cast<double>(weights[i].rows() + weights[i].cols());
    const double a = fan > 0 ? std::sqrt(6.0 / fan) : 0.0;
    std::uniform_real_distribution<double> dist(-a, a);
    for (Index r = 0; r < weights[i].rows(); ++r)
      for (Index c = 0; c < weights[i].cols(); ++c) weights[i](r, c) = dist(rng);
    biases[i].setZero();
  }
}

bool ResNet::finite() const {
  if (!bypass.allFinite()) return false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!weights[i].allFinite() || !biases[i].allFinite()) return false;
  }
  return true;
}

Index LearningComponent::n_in() const {
  Index n = 0;
  for (const auto& b : blocks) n = std::max(n, b.z_offset + b.z_size);
  return n;
}

Index LearningComponent::n_out() const {
  Index n = 0;
  for (const auto& b : blocks) n = std::max(n, b.w_offset + b.w_size);
  return n;
}

Vec LearningComponent::eval(const Vec& z) const {
  Vec w = Vec::Zero(n_out());
  for (const auto& b : blocks) {
    w.segment(b.w_offset, b.w_size) = b.net.eval(z.segment(b.z_offset, b.z_size));
  }
  return w;
}

Mat LearningComponent::jacobian(const Vec& z) const {
  Mat j = Mat::Zero(n_out(), z.size());
  for (const auto& b : blocks) {
    j.block(b.w_offset, b.z_offset, b.w_size, b.z_size) =
        b.net.jacobian(z.segment(b.z_offset, b.z_size));
  }
  return j;
}

BoolMat LearningComponent::pattern() const {
  BoolMat p = BoolMat::Constant(n_out(), n_in(), false);
  for (const auto& b : blocks) p.block(b.w_offset, b.z_offset, b.w_size, b.z_size).setConstant(true);
  return p;
}

void LearningComponent::validate(Index n_z_a, Index n_w_a) const {
  std::vector<int> zc(static_cast<std::size_t>(n_z_a), 0);
  std::vector<int> wc(static_cast<std::size_t>(n_w_a), 0);
  for (const auto& b : blocks) {
    if (b.z_offset < 0 || b.w_offset < 0 || b.z_offset + b.z_size > n_z_a ||
        b.w_offset + b.w_size > n_w_a) {
      throw DimensionError("learning block '" + b.name + "' exceeds z_a/w_a");
    }
    if (b.net.n_in() != b.z_size || b.net.n_out() != b.w_size) {
      throw DimensionError("learning block '" + b.name + "': network shape does not match its slice");
    }
    Index covered = 0;
    for (const auto& h : b.heads) covered += h.size;
    if (!b.heads.empty() && covered != b.w_size) {
      throw DimensionError("learning block '" + b.name + "': heads do not cover its output");
    }
    for (Index i = 0; i < b.z_size; ++i) ++zc[static_cast<std::size_t>(b.z_offset + i)];
    for (Index i = 0; i < b.w_size; ++i) ++wc[static_cast<std::size_t>(b.w_offset + i)];
  }
  for (int c : zc)
    if (c != 1) throw DimensionError("learning blocks must tile z_a exactly");
  for (int c : wc)
    if (c != 1) throw DimensionError("learning blocks must tile w_a exactly");
}

const AugBlock* LearningComponent::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

LearningComponent dense_learning_component(Index n_z_a, Index n_w_a,
                                           const std::vector<Index>& hidden) {
  LearningComponent lc;
  if (n_z_a == 0 && n_w_a == 0) return lc;
  AugBlock b;
  b.name = "dense";
  b.z_size = n_z_a;
  b.w_size = n_w_a;
  b.heads.push_back({"free", 0, n_w_a});
  b.net = ResNet(n_z_a, hidden, n_w_a);
  lc.blocks.push_back(std::move(b));
  return lc;
}

EncoderNet::EncoderNet(Index na, Index nb, Index ny, Index nu, Index n_x_b, Index n_x_a,
                       const std::vector<Index>& hidden)
    : n_a(na), n_b(nb), n_y(ny), n_u(nu) {
  if (na < 0 || nb < 0 || na + nb == 0) throw DimensionError("EncoderNet: need n_a + n_b >= 1");
  base_head = ResNet(input_size(), hidden, n_x_b);
  if (n_x_a > 0) aug_head = ResNet(input_size(), hidden, n_x_a);
}

Vec EncoderNet::estimate_flat(const Vec& input) const {
  if (input.size() != input_size()) throw DimensionError("encoder: input has wrong length");
  Vec x(n_x_b() + n_x_a());
  x.head(n_x_b()) = base_head.eval(input);
  if (n_x_a() > 0) x.tail(n_x_a()) = aug_head.eval(input);
  return x;
}

Vec encoder_input(const EncoderNet& enc, const Mat& y_hist, const Mat& u_hist) {
  if (y_hist.rows() != enc.n_a || y_hist.cols() != enc.n_y) {
    throw DimensionError("encoder: y history must be " + std::to_string(enc.n_a) + " x " +
                         std::to_string(enc.n_y));
  }
  if (u_hist.rows() != enc.n_b || u_hist.cols() != enc.n_u) {
    throw DimensionError("encoder: u history must be " + std::to_string(enc.n_b) + " x " +
                         std::to_string(enc.n_u));
  }
  Vec in(enc.input_size());
  Index k = 0;
  for (Index i = 0; i < enc.n_a; ++i)
    for (Index j = 0; j < enc.n_y; ++j) in(k++) = y_hist(i, j);
  for (Index i = 0; i < enc.n_b; ++i)
    for (Index j = 0; j < enc.n_u; ++j) in(k++) = u_hist(i, j);
  return in;
}

Vec encoder_estimate(const EncoderNet& enc, const Mat& y_hist, const Mat& u_hist) {
  return enc.estimate_flat(encoder_input(enc, y_hist, u_hist));
}

}  // namespace lfr
