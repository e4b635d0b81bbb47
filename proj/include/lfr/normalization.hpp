#pragma once

#include "lfr/baseline.hpp"
#include "lfr/types.hpp"

namespace lfr {

// Per-channel affine transforms: u_n = T_u (u - mu_u), y_n = T_y (y - mu_y),
// x_n = T_x x, with T = diag(1 / sigma).
struct NormalizationTransforms {
  Vec u_mean, u_std;
  Vec y_mean, y_std;
  Vec x_std;

  static NormalizationTransforms identity(Index n_u, Index n_y, Index n_x);

  Index n_u() const { return u_mean.size(); }
  Index n_y() const { return y_mean.size(); }
  Index n_x() const { return x_std.size(); }

  // Rows of a (N x channels) record matrix are samples.
  Mat normalize_u(const Mat& u) const;
  Mat normalize_y(const Mat& y) const;
  Mat denormalize_u(const Mat& u) const;
  Mat denormalize_y(const Mat& y) const;
  Vec normalize_x(const Vec& x) const;
  Vec denormalize_x(const Vec& x) const;

  void validate() const;
};

// Wraps phi_base so it consumes and produces normalized signals:
//   f_n = T_x f(T_x^-1 x_n, T_u^-1 u_n + mu_u)
//   h_n = T_y (h(T_x^-1 x_n, T_u^-1 u_n + mu_u) - mu_y)
// theta keeps its physical units.
class NormalizedBaseline final : public BaselineComponent {
 public:
  NormalizedBaseline(BaselinePtr inner, NormalizationTransforms norm);

  std::string id() const override { return "normalized"; }
  Index n_x() const override { return inner_->n_x(); }
  Index n_u() const override { return inner_->n_u(); }
  Index n_y() const override { return inner_->n_y(); }
  std::vector<std::string> theta_names() const override { return inner_->theta_names(); }
  Vec nominal_theta() const override { return inner_->nominal_theta(); }
  BoolMat jacobian_pattern() const override { return inner_->jacobian_pattern(); }
  bool c2_declared() const override { return inner_->c2_declared(); }
  Vec eval(const Vec& theta, const Vec& z) const override;
  Mat jacobian_z(const Vec& theta, const Vec& z) const override;
  Mat jacobian_theta(const Vec& theta, const Vec& z) const override;
  void eval_batch(const Vec& theta, const double* z, double* w, Index p) const override;
  void vjp_batch(const Vec& theta, const double* z, const double* gw, Index p, double* gz,
                 double* gtheta) const override;
  nlohmann::json describe() const override;

  const BaselinePtr& inner() const { return inner_; }
  const NormalizationTransforms& transforms() const { return norm_; }

 private:
  Vec to_raw_z(const Vec& z) const;
  BaselinePtr inner_;
  NormalizationTransforms norm_;
  Vec in_scale_;   // dz_raw / dz_n per entry
  Vec in_shift_;   // z_raw = in_scale * z_n + in_shift
  Vec out_scale_;  // w_n = out_scale * (w_raw - out_shift)
  Vec out_shift_;
};

}  // namespace lfr
