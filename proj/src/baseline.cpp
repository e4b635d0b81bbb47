#include "lfr/baseline.hpp"

#include "lfr/json_util.hpp"
#include "lfr/kernels.hpp"

#include <algorithm>
#include <vector>

namespace lfr {

void BaselineComponent::eval_batch(const Vec& theta, const double* z, double* w,
                                   Index p) const {
  const Index nz = n_z();
  const Index nw = n_w();
  Vec zc(nz);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < nz; ++i) zc(i) = z[i * p + j];
    const Vec wc = eval(theta, zc);
    for (Index i = 0; i < nw; ++i) w[i * p + j] = wc(i);
  }
}

void BaselineComponent::vjp_batch(const Vec& theta, const double* z, const double* gw,
                                  Index p, double* gz, double* gtheta) const {
  const Index nz = n_z();
  const Index nw = n_w();
  Vec zc(nz);
  Vec gc(nw);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < nz; ++i) zc(i) = z[i * p + j];
    for (Index i = 0; i < nw; ++i) gc(i) = gw[i * p + j];
    if (gz != nullptr) {
      const Vec g = jacobian_z(theta, zc).transpose() * gc;
      for (Index i = 0; i < nz; ++i) gz[i * p + j] += g(i);
    }
    if (gtheta != nullptr) {
      const Vec g = jacobian_theta(theta, zc).transpose() * gc;
      for (Index i = 0; i < g.size(); ++i) gtheta[i] += g(i);
    }
  }
}

namespace {

// Row-major copy for the kernels (Eigen defaults to column-major).
std::vector<double> row_major(const Mat& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return out;
}

}  // namespace

Vec LinearBaseline::eval(const Vec& theta, const Vec& z) const {
  if (z.size() != n_z()) throw DimensionError(id() + "::eval: z has wrong length");
  return system_matrix(theta) * z;
}

Mat LinearBaseline::jacobian_z(const Vec& theta, const Vec&) const { return system_matrix(theta); }

Mat LinearBaseline::jacobian_theta(const Vec& theta, const Vec& z) const {
  const std::vector<Mat> d = system_matrix_grad(theta);
  Mat j(n_w(), static_cast<Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) j.col(static_cast<Index>(i)) = d[i] * z;
  return j;
}

void LinearBaseline::eval_batch(const Vec& theta, const double* z, double* w, Index p) const {
  const auto m = row_major(system_matrix(theta));
  std::fill(w, w + n_w() * p, 0.0);
  kernels::active().gemm_nn(static_cast<std::size_t>(n_w()), static_cast<std::size_t>(n_z()),
                            static_cast<std::size_t>(p), m.data(), z, w);
}

void LinearBaseline::vjp_batch(const Vec& theta, const double* z, const double* gw, Index p,
                               double* gz, double* gtheta) const {
  const auto& k = kernels::active();
  const std::size_t nw = static_cast<std::size_t>(n_w());
  const std::size_t nz = static_cast<std::size_t>(n_z());
  if (gz != nullptr) {
    const auto m = row_major(system_matrix(theta));
    k.gemm_tn(nw, nz, static_cast<std::size_t>(p), m.data(), gw, gz);
  }
  if (gtheta != nullptr) {
    // dL/dtheta_i = <dM/dtheta_i, G Z^T>
    std::vector<double> s(nw * nz, 0.0);
    k.gemm_nt(nw, nz, static_cast<std::size_t>(p), gw, z, s.data());
    const std::vector<Mat> d = system_matrix_grad(theta);
    for (std::size_t t = 0; t < d.size(); ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < nw; ++i)
        for (std::size_t j = 0; j < nz; ++j)
          acc += d[t](static_cast<Index>(i), static_cast<Index>(j)) * s[i * nz + j];
      gtheta[t] += acc;
    }
  }
}

AffineBaseline::AffineBaseline(Mat a, Mat b, Mat c, Mat d)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows() || c_.cols() != a_.cols() ||
      d_.rows() != c_.rows() || d_.cols() != b_.cols()) {
    throw DimensionError("AffineBaseline: inconsistent A/B/C/D shapes");
  }
  if (a_.rows() < 1 || b_.cols() < 1 || c_.rows() < 1) {
    throw DimensionError("AffineBaseline: n_x, n_u, n_y must be >= 1");
  }
}

std::vector<std::string> AffineBaseline::theta_names() const {
  std::vector<std::string> names;
  auto add = [&names](const char* tag, const Mat& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        names.push_back(std::string(tag) + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
      }
    }
  };
  add("A", a_);
  add("B", b_);
  add("C", c_);
  add("D", d_);
  return names;
}

Vec AffineBaseline::nominal_theta() const {
  Vec theta(a_.size() + b_.size() + c_.size() + d_.size());
  Index k = 0;
  for (const Mat* m : {&a_, &b_, &c_, &d_}) {
    for (Index i = 0; i < m->rows(); ++i) {
      for (Index j = 0; j < m->cols(); ++j) theta(k++) = (*m)(i, j);
    }
  }
  return theta;
}

BoolMat AffineBaseline::jacobian_pattern() const {
  return BoolMat::Constant(n_w(), n_z(), true);
}

Mat AffineBaseline::system_matrix(const Vec& theta) const {
  if (theta.size() != static_cast<Index>(a_.size() + b_.size() + c_.size() + d_.size())) {
    throw DimensionError("AffineBaseline: theta has wrong length");
  }
  const Index nx = n_x();
  const Index nu = n_u();
  const Index ny = n_y();
  Mat s(nx + ny, nx + nu);
  Index k = 0;
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < nx; ++j) s(i, j) = theta(k++);
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < nu; ++j) s(i, nx + j) = theta(k++);
  for (Index i = 0; i < ny; ++i)
    for (Index j = 0; j < nx; ++j) s(nx + i, j) = theta(k++);
  for (Index i = 0; i < ny; ++i)
    for (Index j = 0; j < nu; ++j) s(nx + i, nx + j) = theta(k++);
  return s;
}

std::vector<Mat> AffineBaseline::system_matrix_grad(const Vec& theta) const {
  const Index nx = n_x();
  const Index nu = n_u();
  const Index ny = n_y();
  std::vector<Mat> d;
  d.reserve(static_cast<std::size_t>(theta.size()));
  auto unit = [&](Index r, Index c) {
    Mat e = Mat::Zero(nx + ny, nx + nu);
    e(r, c) = 1.0;
    d.push_back(std::move(e));
  };
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < nx; ++j) unit(i, j);
  for (Index i = 0; i < nx; ++i)
    for (Index j = 0; j < nu; ++j) unit(i, nx + j);
  for (Index i = 0; i < ny; ++i)
    for (Index j = 0; j < nx; ++j) unit(nx + i, j);
  for (Index i = 0; i < ny; ++i)
    for (Index j = 0; j < nu; ++j) unit(nx + i, nx + j);
  return d;
}

nlohmann::json AffineBaseline::describe() const {
  return {{"id", id()},
          {"A", json_util::matrix_to_json(a_)},
          {"B", json_util::matrix_to_json(b_)},
          {"C", json_util::matrix_to_json(c_)},
          {"D", json_util::matrix_to_json(d_)}};
}

}  // namespace lfr
