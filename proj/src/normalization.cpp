#include "lfr/normalization.hpp"

#include "lfr/json_util.hpp"

#include <cmath>
#include <vector>

namespace lfr {

NormalizationTransforms NormalizationTransforms::identity(Index n_u, Index n_y, Index n_x) {
  NormalizationTransforms t;
  t.u_mean = Vec::Zero(n_u);
  t.u_std = Vec::Ones(n_u);
  t.y_mean = Vec::Zero(n_y);
  t.y_std = Vec::Ones(n_y);
  t.x_std = Vec::Ones(n_x);
  return t;
}

namespace {

Mat forward_cols(const Mat& m, const Vec& mean, const Vec& std) {
  if (m.cols() != mean.size()) throw DimensionError("normalization: channel count mismatch");
  Mat out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) out.col(j) = (m.col(j).array() - mean(j)) / std(j);
  return out;
}

Mat inverse_cols(const Mat& m, const Vec& mean, const Vec& std) {
  if (m.cols() != mean.size()) throw DimensionError("normalization: channel count mismatch");
  Mat out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) out.col(j) = m.col(j).array() * std(j) + mean(j);
  return out;
}

}  // namespace

Mat NormalizationTransforms::normalize_u(const Mat& u) const { return forward_cols(u, u_mean, u_std); }
Mat NormalizationTransforms::normalize_y(const Mat& y) const { return forward_cols(y, y_mean, y_std); }
Mat NormalizationTransforms::denormalize_u(const Mat& u) const { return inverse_cols(u, u_mean, u_std); }
Mat NormalizationTransforms::denormalize_y(const Mat& y) const { return inverse_cols(y, y_mean, y_std); }

Vec NormalizationTransforms::normalize_x(const Vec& x) const {
  if (x.size() != x_std.size()) throw DimensionError("normalization: state length mismatch");
  return (x.array() / x_std.array()).matrix();
}

Vec NormalizationTransforms::denormalize_x(const Vec& x) const {
  if (x.size() != x_std.size()) throw DimensionError("normalization: state length mismatch");
  return (x.array() * x_std.array()).matrix();
}

void NormalizationTransforms::validate() const {
  if (u_mean.size() != u_std.size() || y_mean.size() != y_std.size()) {
    throw DimensionError("normalization: mean/std length mismatch");
  }
  for (const Vec* s : {&u_std, &y_std, &x_std}) {
    for (Index i = 0; i < s->size(); ++i) {
      if (!(std::isfinite((*s)(i)) && (*s)(i) > 0.0)) {
        throw DataError("normalization: standard deviations must be positive and finite");
      }
    }
  }
  if (!u_mean.allFinite() || !y_mean.allFinite()) throw DataError("normalization: non-finite mean");
}

NormalizedBaseline::NormalizedBaseline(BaselinePtr inner, NormalizationTransforms norm)
    : inner_(std::move(inner)), norm_(std::move(norm)) {
  if (!inner_) throw ConfigError("NormalizedBaseline: null baseline");
  if (norm_.n_u() != inner_->n_u() || norm_.n_y() != inner_->n_y() || norm_.n_x() != inner_->n_x()) {
    throw DimensionError("NormalizedBaseline: transform sizes do not match the baseline");
  }
  norm_.validate();
  const Index nx = n_x();
  const Index nu = n_u();
  const Index ny = n_y();
  in_scale_.resize(nx + nu);
  in_shift_ = Vec::Zero(nx + nu);
  in_scale_.head(nx) = norm_.x_std;
  in_scale_.tail(nu) = norm_.u_std;
  in_shift_.tail(nu) = norm_.u_mean;
  out_scale_.resize(nx + ny);
  out_shift_ = Vec::Zero(nx + ny);
  out_scale_.head(nx) = norm_.x_std.cwiseInverse();
  out_scale_.tail(ny) = norm_.y_std.cwiseInverse();
  out_shift_.tail(ny) = norm_.y_mean;
}

Vec NormalizedBaseline::to_raw_z(const Vec& z) const {
  if (z.size() != n_z()) throw DimensionError("NormalizedBaseline: z has wrong length");
  return (in_scale_.array() * z.array() + in_shift_.array()).matrix();
}

Vec NormalizedBaseline::eval(const Vec& theta, const Vec& z) const {
  const Vec w = inner_->eval(theta, to_raw_z(z));
  return (out_scale_.array() * (w - out_shift_).array()).matrix();
}

Mat NormalizedBaseline::jacobian_z(const Vec& theta, const Vec& z) const {
  return out_scale_.asDiagonal() * inner_->jacobian_z(theta, to_raw_z(z)) * in_scale_.asDiagonal();
}

Mat NormalizedBaseline::jacobian_theta(const Vec& theta, const Vec& z) const {
  return out_scale_.asDiagonal() * inner_->jacobian_theta(theta, to_raw_z(z));
}

void NormalizedBaseline::eval_batch(const Vec& theta, const double* z, double* w, Index p) const {
  const Index nz = n_z();
  const Index nw = n_w();
  std::vector<double> zr(static_cast<std::size_t>(nz * p));
  for (Index i = 0; i < nz; ++i) {
    const double s = in_scale_(i);
    const double b = in_shift_(i);
    for (Index j = 0; j < p; ++j) zr[i * p + j] = s * z[i * p + j] + b;
  }
  inner_->eval_batch(theta, zr.data(), w, p);
  for (Index i = 0; i < nw; ++i) {
    const double s = out_scale_(i);
    const double b = out_shift_(i);
    for (Index j = 0; j < p; ++j) w[i * p + j] = s * (w[i * p + j] - b);
  }
}

void NormalizedBaseline::vjp_batch(const Vec& theta, const double* z, const double* gw, Index p,
                                   double* gz, double* gtheta) const {
  const Index nz = n_z();
  const Index nw = n_w();
  std::vector<double> zr(static_cast<std::size_t>(nz * p));
  for (Index i = 0; i < nz; ++i) {
    for (Index j = 0; j < p; ++j) zr[i * p + j] = in_scale_(i) * z[i * p + j] + in_shift_(i);
  }
  std::vector<double> gr(static_cast<std::size_t>(nw * p));
  for (Index i = 0; i < nw; ++i) {
    for (Index j = 0; j < p; ++j) gr[i * p + j] = out_scale_(i) * gw[i * p + j];
  }
  if (gz == nullptr) {
    inner_->vjp_batch(theta, zr.data(), gr.data(), p, nullptr, gtheta);
    return;
  }
  std::vector<double> gzr(static_cast<std::size_t>(nz * p), 0.0);
  inner_->vjp_batch(theta, zr.data(), gr.data(), p, gzr.data(), gtheta);
  for (Index i = 0; i < nz; ++i) {
    for (Index j = 0; j < p; ++j) gz[i * p + j] += in_scale_(i) * gzr[i * p + j];
  }
}

nlohmann::json NormalizedBaseline::describe() const {
  return {{"id", id()},
          {"inner", inner_->describe()},
          {"u_mean", json_util::vector_to_json(norm_.u_mean)},
          {"u_std", json_util::vector_to_json(norm_.u_std)},
          {"y_mean", json_util::vector_to_json(norm_.y_mean)},
          {"y_std", json_util::vector_to_json(norm_.y_std)},
          {"x_std", json_util::vector_to_json(norm_.x_std)}};
}

}  // namespace lfr
