#pragma once

#include "lfr/types.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace lfr {

// First-principles component phi_base(theta, z_b) = [f_base; h_base] with
// z_b = (x_b, u). Implementations supply analytic Jacobians with respect to
// both the latent input and the physical parameters.
//
// Batched entry points take row-major (rows x p) arrays where each column is
// one sample; the defaults fall back to the per-sample methods.
class BaselineComponent {
 public:
  virtual ~BaselineComponent() = default;

  virtual std::string id() const = 0;
  virtual Index n_x() const = 0;
  virtual Index n_u() const = 0;
  virtual Index n_y() const = 0;
  Index n_z() const { return n_x() + n_u(); }
  Index n_w() const { return n_x() + n_y(); }

  virtual std::vector<std::string> theta_names() const = 0;
  virtual Vec nominal_theta() const = 0;
  Index n_theta() const { return static_cast<Index>(theta_names().size()); }

  // Structural dependence of w_b on z_b, (n_w x n_z). Must cover every
  // entry that can be nonzero for any theta.
  virtual BoolMat jacobian_pattern() const = 0;
  // Condition-2 smoothness is self-certified by the implementation.
  virtual bool c2_declared() const { return true; }

  virtual Vec eval(const Vec& theta, const Vec& z) const = 0;
  virtual Mat jacobian_z(const Vec& theta, const Vec& z) const = 0;
  virtual Mat jacobian_theta(const Vec& theta, const Vec& z) const = 0;

  virtual void eval_batch(const Vec& theta, const double* z, double* w, Index p) const;
  // gz (n_z x p) and gtheta (n_theta) are accumulated into; either may be null.
  virtual void vjp_batch(const Vec& theta, const double* z, const double* gw, Index p,
                         double* gz, double* gtheta) const;

  // Enough information to rebuild the component from a checkpoint.
  virtual nlohmann::json describe() const = 0;
};

using BaselinePtr = std::shared_ptr<const BaselineComponent>;

// Components that are linear in z_b: w_b = M(theta) z_b. Subclasses supply
// M and dM/dtheta_i; batched evaluation then runs through the GEMM kernels.
class LinearBaseline : public BaselineComponent {
 public:
  virtual Mat system_matrix(const Vec& theta) const = 0;
  virtual std::vector<Mat> system_matrix_grad(const Vec& theta) const = 0;

  Vec eval(const Vec& theta, const Vec& z) const override;
  Mat jacobian_z(const Vec& theta, const Vec& z) const override;
  Mat jacobian_theta(const Vec& theta, const Vec& z) const override;
  void eval_batch(const Vec& theta, const double* z, double* w, Index p) const override;
  void vjp_batch(const Vec& theta, const double* z, const double* gw, Index p, double* gz,
                 double* gtheta) const override;
};

// f_base = A x + B u, h_base = C x + D u with every matrix entry a parameter.
// theta = [vec(A); vec(B); vec(C); vec(D)], each row-major.
class AffineBaseline final : public LinearBaseline {
 public:
  AffineBaseline(Mat a, Mat b, Mat c, Mat d);

  std::string id() const override { return "affine"; }
  Index n_x() const override { return a_.rows(); }
  Index n_u() const override { return b_.cols(); }
  Index n_y() const override { return c_.rows(); }
  std::vector<std::string> theta_names() const override;
  Vec nominal_theta() const override;
  BoolMat jacobian_pattern() const override;
  nlohmann::json describe() const override;

  // [A B; C D] as a single (n_w x n_z) matrix.
  Mat system_matrix(const Vec& theta) const override;
  std::vector<Mat> system_matrix_grad(const Vec& theta) const override;

 private:
  Mat a_, b_, c_, d_;
};

}  // namespace lfr
