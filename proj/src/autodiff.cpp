#include "lfr/autodiff.hpp"

#include "lfr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

namespace lfr::ad {

// ---- ParamVector -----------------------------------------------------------

const ParamVector::Slice& ParamVector::add(const std::string& name, Index rows, Index cols,
                                           bool trainable, const double* init) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter '" + name + "'");
  if (rows < 0 || cols < 0) throw DimensionError("parameter '" + name + "' has negative shape");
  Slice s{name, values.size(), rows, cols, trainable};
  const Index old = values.size();
  values.conservativeResize(old + s.size());
  for (Index i = 0; i < s.size(); ++i) values(old + i) = init != nullptr ? init[i] : 0.0;
  index_[name] = slices_.size();
  slices_.push_back(s);
  return slices_.back();
}

const ParamVector::Slice& ParamVector::add(const std::string& name, const Mat& value, bool trainable) {
  std::vector<double> rm(static_cast<std::size_t>(value.size()));
  for (Index i = 0; i < value.rows(); ++i)
    for (Index j = 0; j < value.cols(); ++j) rm[static_cast<std::size_t>(i * value.cols() + j)] = value(i, j);
  return add(name, value.rows(), value.cols(), trainable, rm.data());
}

const ParamVector::Slice& ParamVector::slice(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return slices_[it->second];
}

void ParamVector::set_trainable(const std::string& name, bool trainable) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  slices_[it->second].trainable = trainable;
}

Mat ParamVector::get(const std::string& name) const {
  const Slice& s = slice(name);
  Mat m(s.rows, s.cols);
  for (Index i = 0; i < s.rows; ++i)
    for (Index j = 0; j < s.cols; ++j) m(i, j) = values(s.offset + i * s.cols + j);
  return m;
}

void ParamVector::set(const std::string& name, const Mat& value) {
  const Slice& s = slice(name);
  if (value.rows() != s.rows || value.cols() != s.cols) {
    throw DimensionError("parameter '" + name + "' shape mismatch");
  }
  for (Index i = 0; i < s.rows; ++i)
    for (Index j = 0; j < s.cols; ++j) values(s.offset + i * s.cols + j) = value(i, j);
}

Vec ParamVector::get_vec(const std::string& name) const {
  const Slice& s = slice(name);
  return values.segment(s.offset, s.size());
}

Vec ParamVector::trainable_mask() const {
  Vec m = Vec::Zero(values.size());
  for (const auto& s : slices_)
    if (s.trainable) m.segment(s.offset, s.size()).setOnes();
  return m;
}

// ---- primitive registry ----------------------------------------------------

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::unordered_map<std::string, CustomPrimitive>& registry() {
  static std::unordered_map<std::string, CustomPrimitive> r;
  return r;
}

const CustomPrimitive* lookup(const std::string& name) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto it = registry().find(name);
  return it == registry().end() ? nullptr : &it->second;
}

const char* op_name(int op) {
  static const char* names[] = {"param", "const", "add",    "sub",   "mul",   "neg",
                                "scale", "matmul", "dot",   "tanh",  "pow",   "reciprocal",
                                "sum",   "mean",  "sqnorm", "slice", "concat", "custom"};
  return names[op];
}

}  // namespace

void register_primitive(const std::string& name, CustomPrimitive prim) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(prim);
}

bool primitive_registered(const std::string& name) { return lookup(name) != nullptr; }

// ---- Tape ------------------------------------------------------------------

Tape::Tape(const ParamVector* params) : params_(params) {}

void Tape::reset(const ParamVector* params) {
  params_ = params;
  nodes_.clear();
  arena_.clear();
}

NodeId Tape::push(Node n) {
  n.offset = arena_.size();
  arena_.resize(arena_.size() + static_cast<std::size_t>(n.shape.size()));
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const double* Tape::value(NodeId n) const { return val(n); }

double Tape::scalar_value(NodeId n) const {
  if (shape(n).size() != 1) throw DimensionError("scalar_value: node is not 1x1");
  return *val(n);
}

Mat Tape::value_mat(NodeId n) const {
  const Shape s = shape(n);
  Mat m(s.rows, s.cols);
  const double* v = val(n);
  for (Index i = 0; i < s.rows; ++i)
    for (Index j = 0; j < s.cols; ++j) m(i, j) = v[i * s.cols + j];
  return m;
}

void Tape::check_finite(NodeId n) const {
  const Node& node = nodes_[static_cast<std::size_t>(n)];
  const double* v = val(n);
  for (Index i = 0; i < node.shape.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError("non-finite value at tape node " + std::to_string(n) + " (" +
                         op_name(static_cast<int>(node.op)) + ")");
    }
  }
}

NodeId Tape::param(const std::string& name) {
  if (params_ == nullptr) throw ConfigError("tape has no parameter vector");
  const auto& s = params_->slice(name);
  Node n;
  n.op = Op::Param;
  n.shape = {s.rows, s.cols};
  n.i0 = s.offset;
  n.needs_grad = s.trainable;
  const NodeId id = push(std::move(n));
  if (s.size() > 0) std::memcpy(val(id), params_->values.data() + s.offset, sizeof(double) * s.size());
  return id;
}

NodeId Tape::constant(Index rows, Index cols, const double* data) {
  Node n;
  n.op = Op::Const;
  n.shape = {rows, cols};
  const NodeId id = push(std::move(n));
  if (rows * cols > 0) std::memcpy(val(id), data, sizeof(double) * rows * cols);
  return id;
}

NodeId Tape::constant(const Mat& m) {
  Node n;
  n.op = Op::Const;
  n.shape = {m.rows(), m.cols()};
  const NodeId id = push(std::move(n));
  double* v = val(id);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  return id;
}

NodeId Tape::scalar(double v) { return constant(1, 1, &v); }

namespace {

// Broadcast kinds of the second operand relative to the output.
enum class Bc { Same, Column, Scalar };

Bc broadcast_kind(Shape out, Shape s) {
  if (s.rows == out.rows && s.cols == out.cols) return Bc::Same;
  if (s.rows == 1 && s.cols == 1) return Bc::Scalar;
  if (s.rows == out.rows && s.cols == 1) return Bc::Column;
  throw DimensionError("incompatible shapes for broadcasting");
}

}  // namespace

NodeId Tape::elementwise(Op op, NodeId a, NodeId b) {
  Shape sa = shape(a), sb = shape(b);
  // Keep the full-size operand first; sub handles the swap by sign below.
  bool swapped = false;
  if (sa.size() < sb.size()) {
    std::swap(a, b);
    std::swap(sa, sb);
    swapped = true;
  }
  const Bc bc = broadcast_kind(sa, sb);
  Node n;
  n.op = op;
  n.shape = sa;
  n.a = a;
  n.b = b;
  n.s = swapped ? -1.0 : 1.0;  // for sub: out = s * (a - b)
  n.needs_grad = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(n));
  const auto& k = kernels::active();
  const double* va = val(a);
  const double* vb = val(b);
  double* out = val(id);
  const std::size_t R = static_cast<std::size_t>(sa.rows);
  const std::size_t C = static_cast<std::size_t>(sa.cols);
  const std::size_t N = R * C;
  if (op == Op::Add) {
    if (bc == Bc::Same) {
      k.add(va, vb, out, N);
    } else {
      std::memcpy(out, va, sizeof(double) * N);
      if (bc == Bc::Scalar) {
        k.add_scalar(vb[0], out, N);
      } else {
        for (std::size_t i = 0; i < R; ++i) k.add_scalar(vb[i], out + i * C, C);
      }
    }
  } else if (op == Op::Sub) {
    if (bc == Bc::Same) {
      k.sub(va, vb, out, N);
    } else {
      std::memcpy(out, va, sizeof(double) * N);
      if (bc == Bc::Scalar) {
        k.add_scalar(-vb[0], out, N);
      } else {
        for (std::size_t i = 0; i < R; ++i) k.add_scalar(-vb[i], out + i * C, C);
      }
    }
    if (swapped)
      for (std::size_t i = 0; i < N; ++i) out[i] = -out[i];
  } else {  // Mul
    if (bc == Bc::Same) {
      k.mul(va, vb, out, N);
    } else {
      for (std::size_t i = 0; i < R; ++i) {
        const double* row = va + i * C;
        const double f = bc == Bc::Scalar ? vb[0] : vb[i];
        for (std::size_t j = 0; j < C; ++j) out[i * C + j] = f * row[j];
      }
    }
  }
  check_finite(id);
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) { return elementwise(Op::Add, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return elementwise(Op::Sub, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return elementwise(Op::Mul, a, b); }

NodeId Tape::scale(NodeId a, double s) {
  Node n;
  n.op = Op::Scale;
  n.shape = shape(a);
  n.a = a;
  n.s = s;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  const double* va = val(a);
  double* out = val(id);
  for (Index i = 0; i < shape(id).size(); ++i) out[i] = s * va[i];
  check_finite(id);
  return id;
}

NodeId Tape::neg(NodeId a) {
  const NodeId id = scale(a, -1.0);
  nodes_[static_cast<std::size_t>(id)].op = Op::Neg;
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Shape sa = shape(a), sb = shape(b);
  if (sa.cols != sb.rows) {
    throw DimensionError("matmul: " + std::to_string(sa.rows) + "x" + std::to_string(sa.cols) +
                         " times " + std::to_string(sb.rows) + "x" + std::to_string(sb.cols));
  }
  Node n;
  n.op = Op::MatMul;
  n.shape = {sa.rows, sb.cols};
  n.a = a;
  n.b = b;
  n.needs_grad = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(n));
  kernels::active().gemm_nn(static_cast<std::size_t>(sa.rows), static_cast<std::size_t>(sa.cols),
                            static_cast<std::size_t>(sb.cols), val(a), val(b), val(id));
  check_finite(id);
  return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
  const Shape sa = shape(a), sb = shape(b);
  if (sa.rows != sb.rows || sa.cols != sb.cols) throw DimensionError("dot: shape mismatch");
  Node n;
  n.op = Op::Dot;
  n.shape = {1, 1};
  n.a = a;
  n.b = b;
  n.needs_grad = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(n));
  *val(id) = kernels::active().dot(val(a), val(b), static_cast<std::size_t>(sa.size()));
  check_finite(id);
  return id;
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::Tanh;
  n.shape = shape(a);
  n.a = a;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  const double* va = val(a);
  double* out = val(id);
  for (Index i = 0; i < shape(id).size(); ++i) out[i] = std::tanh(va[i]);
  return id;
}

NodeId Tape::pow(NodeId a, int p) {
  Node n;
  n.op = Op::Pow;
  n.shape = shape(a);
  n.a = a;
  n.s = p;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  const double* va = val(a);
  double* out = val(id);
  for (Index i = 0; i < shape(id).size(); ++i) out[i] = std::pow(va[i], p);
  check_finite(id);
  return id;
}

NodeId Tape::reciprocal(NodeId a) {
  Node n;
  n.op = Op::Recip;
  n.shape = shape(a);
  n.a = a;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  const double* va = val(a);
  double* out = val(id);
  for (Index i = 0; i < shape(id).size(); ++i) out[i] = 1.0 / va[i];
  check_finite(id);
  return id;
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.shape = {1, 1};
  n.a = a;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  *val(id) = kernels::active().sum(val(a), static_cast<std::size_t>(shape(a).size()));
  check_finite(id);
  return id;
}

NodeId Tape::mean(NodeId a) {
  const Index cnt = shape(a).size();
  if (cnt == 0) throw DimensionError("mean of an empty node");
  const NodeId s = sum(a);
  return scale(s, 1.0 / static_cast<double>(cnt));
}

NodeId Tape::sqnorm(NodeId a) {
  Node n;
  n.op = Op::SqNorm;
  n.shape = {1, 1};
  n.a = a;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  const std::size_t cnt = static_cast<std::size_t>(shape(a).size());
  *val(id) = kernels::active().dot(val(a), val(a), cnt);
  check_finite(id);
  return id;
}

NodeId Tape::slice_rows(NodeId a, Index r0, Index cnt) {
  const Shape sa = shape(a);
  if (r0 < 0 || cnt < 0 || r0 + cnt > sa.rows) throw DimensionError("slice_rows: out of range");
  Node n;
  n.op = Op::Slice;
  n.shape = {cnt, sa.cols};
  n.a = a;
  n.i0 = r0;
  n.needs_grad = requires_grad(a);
  const NodeId id = push(std::move(n));
  if (cnt * sa.cols > 0) {
    std::memcpy(val(id), val(a) + r0 * sa.cols, sizeof(double) * cnt * sa.cols);
  }
  return id;
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = shape(parts.front()).cols;
  Index rows = 0;
  bool g = false;
  for (NodeId p : parts) {
    if (shape(p).cols != cols) throw DimensionError("concat_rows: column counts differ");
    rows += shape(p).rows;
    g = g || requires_grad(p);
  }
  Node n;
  n.op = Op::Concat;
  n.shape = {rows, cols};
  n.inputs = parts;
  n.needs_grad = g;
  const NodeId id = push(std::move(n));
  double* out = val(id);
  for (NodeId p : parts) {
    const Index cnt = shape(p).size();
    if (cnt > 0) std::memcpy(out, val(p), sizeof(double) * cnt);
    out += cnt;
  }
  return id;
}

NodeId Tape::custom(const std::string& name, const std::vector<NodeId>& inputs,
                    std::shared_ptr<const void> ctx) {
  const CustomPrimitive* prim = lookup(name);
  if (prim == nullptr) throw ConfigError("unregistered primitive '" + name + "'");
  std::vector<Shape> shapes;
  bool g = false;
  for (NodeId i : inputs) {
    shapes.push_back(shape(i));
    g = g || requires_grad(i);
  }
  Node n;
  n.op = Op::Custom;
  n.shape = prim->shape(shapes, ctx.get());
  n.inputs = inputs;
  n.prim = prim;
  n.ctx = std::move(ctx);
  n.needs_grad = g;
  const NodeId id = push(std::move(n));
  CustomCall call;
  for (NodeId i : inputs) call.in.push_back(val(i));
  call.in_shapes = shapes;
  call.out = val(id);
  call.out_shape = shape(id);
  call.ctx = nodes_[static_cast<std::size_t>(id)].ctx.get();
  std::fill(call.out, call.out + call.out_shape.size(), 0.0);
  prim->forward(call);
  check_finite(id);
  return id;
}

void Tape::backward(NodeId out, Vec& grad) {
  if (shape(out).size() != 1) throw DimensionError("backward: output must be 1x1");
  if (params_ != nullptr && grad.size() == 0) grad = Vec::Zero(params_->size());
  grads_.assign(arena_.size(), 0.0);
  auto g = [this](NodeId n) { return grads_.data() + nodes_[static_cast<std::size_t>(n)].offset; };
  *g(out) = 1.0;
  const auto& k = kernels::active();

  for (NodeId id = out; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    const double* go = g(id);
    const std::size_t N = static_cast<std::size_t>(n.shape.size());
    switch (n.op) {
      case Op::Param: {
        double* dst = grad.data() + n.i0;
        for (std::size_t i = 0; i < N; ++i) dst[i] += go[i];
        break;
      }
      case Op::Const:
        break;
      case Op::Add:
      case Op::Sub: {
        const double sa = n.op == Op::Sub ? n.s : 1.0;
        const double sb = n.op == Op::Sub ? -n.s : 1.0;
        if (requires_grad(n.a)) k.axpy(sa, go, g(n.a), N);
        if (requires_grad(n.b)) {
          const Shape sbs = shape(n.b);
          double* gb = g(n.b);
          if (sbs.size() == static_cast<Index>(N)) {
            k.axpy(sb, go, gb, N);
          } else if (sbs.size() == 1) {
            gb[0] += sb * k.sum(go, N);
          } else {
            const std::size_t C = static_cast<std::size_t>(n.shape.cols);
            for (Index i = 0; i < sbs.rows; ++i) gb[i] += sb * k.sum(go + i * C, C);
          }
        }
        break;
      }
      case Op::Mul: {
        const Shape sbs = shape(n.b);
        const double* va = val(n.a);
        const double* vb = val(n.b);
        const std::size_t C = static_cast<std::size_t>(n.shape.cols);
        if (sbs.size() == static_cast<Index>(N)) {
          if (requires_grad(n.a)) k.mul_acc(go, vb, g(n.a), N);
          if (requires_grad(n.b)) k.mul_acc(go, va, g(n.b), N);
        } else {
          if (requires_grad(n.a)) {
            double* ga = g(n.a);
            for (Index i = 0; i < n.shape.rows; ++i) {
              const double f = sbs.size() == 1 ? vb[0] : vb[i];
              k.axpy(f, go + i * C, ga + i * C, C);
            }
          }
          if (requires_grad(n.b)) {
            double* gb = g(n.b);
            for (Index i = 0; i < n.shape.rows; ++i) {
              const double d = k.dot(go + i * C, va + i * C, C);
              gb[sbs.size() == 1 ? 0 : i] += d;
            }
          }
        }
        break;
      }
      case Op::Neg:
      case Op::Scale:
        k.axpy(n.s, go, g(n.a), N);
        break;
      case Op::MatMul: {
        const Shape sa = shape(n.a), sb = shape(n.b);
        const auto m = static_cast<std::size_t>(sa.rows);
        const auto kk = static_cast<std::size_t>(sa.cols);
        const auto p = static_cast<std::size_t>(sb.cols);
        if (requires_grad(n.a)) k.gemm_nt(m, kk, p, go, val(n.b), g(n.a));
        if (requires_grad(n.b)) k.gemm_tn(m, kk, p, val(n.a), go, g(n.b));
        break;
      }
      case Op::Dot: {
        const std::size_t M = static_cast<std::size_t>(shape(n.a).size());
        if (requires_grad(n.a)) k.axpy(go[0], val(n.b), g(n.a), M);
        if (requires_grad(n.b)) k.axpy(go[0], val(n.a), g(n.b), M);
        break;
      }
      case Op::Tanh:
        k.tanh_backward(val(id), go, g(n.a), N);
        break;
      case Op::Pow: {
        const int p = static_cast<int>(n.s);
        const double* va = val(n.a);
        double* ga = g(n.a);
        if (p != 0)
          for (std::size_t i = 0; i < N; ++i) ga[i] += go[i] * p * std::pow(va[i], p - 1);
        break;
      }
      case Op::Recip: {
        const double* vo = val(id);
        double* ga = g(n.a);
        for (std::size_t i = 0; i < N; ++i) ga[i] -= go[i] * vo[i] * vo[i];
        break;
      }
      case Op::Sum:
        k.add_scalar(go[0], g(n.a), static_cast<std::size_t>(shape(n.a).size()));
        break;
      case Op::Mean:
        break;  // lowered to Sum + Scale
      case Op::SqNorm:
        k.axpy(2.0 * go[0], val(n.a), g(n.a), static_cast<std::size_t>(shape(n.a).size()));
        break;
      case Op::Slice:
        k.axpy(1.0, go, g(n.a) + n.i0 * n.shape.cols, N);
        break;
      case Op::Concat: {
        const double* src = go;
        for (NodeId p : n.inputs) {
          const std::size_t cnt = static_cast<std::size_t>(shape(p).size());
          if (requires_grad(p)) k.axpy(1.0, src, g(p), cnt);
          src += cnt;
        }
        break;
      }
      case Op::Custom: {
        CustomCall call;
        for (NodeId i : n.inputs) {
          call.in.push_back(val(i));
          call.in_shapes.push_back(shape(i));
          call.gin.push_back(requires_grad(i) ? g(i) : nullptr);
        }
        call.out = const_cast<double*>(val(id));
        call.out_shape = n.shape;
        call.gout = go;
        call.ctx = n.ctx.get();
        n.prim->backward(call);
        break;
      }
    }
  }
}

// ---- drivers ---------------------------------------------------------------

GradResult grad(const LossBuilder& builder, const ParamVector& params) {
  Tape t(&params);
  const NodeId out = builder(t, params);
  GradResult r;
  r.value = t.scalar_value(out);
  r.grad = Vec::Zero(params.size());
  t.backward(out, r.grad);
  return r;
}

double eval_loss(const LossBuilder& builder, const ParamVector& params) {
  Tape t(&params);
  return t.scalar_value(builder(t, params));
}

double check_grad(const LossBuilder& builder, const ParamVector& params,
                  const std::vector<Index>& coords, double step) {
  if (!(step > 0)) throw ConfigError("check_grad: step must be positive");
  const GradResult g = grad(builder, params);
  ParamVector p = params;
  double worst = 0.0;
  for (Index c : coords) {
    if (c < 0 || c >= params.size()) throw DimensionError("check_grad: coordinate out of range");
    const double x0 = p.values(c);
    p.values(c) = x0 + step;
    const double lp = eval_loss(builder, p);
    p.values(c) = x0 - step;
    const double lm = eval_loss(builder, p);
    p.values(c) = x0;
    const double num = (lp - lm) / (2.0 * step);
    const double ana = g.grad(c);
    const double denom = std::max({std::abs(ana), std::abs(num), 1e-8});
    worst = std::max(worst, std::abs(ana - num) / denom);
  }
  return worst;
}

}  // namespace lfr::ad
