#pragma once

#include "lfr/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace lfr::ad {

// Flat parameter vector with named, disjoint row-major matrix slices.
class ParamVector {
 public:
  struct Slice {
    std::string name;
    Index offset = 0;
    Index rows = 0;
    Index cols = 0;
    bool trainable = true;
    Index size() const { return rows * cols; }
  };

  // Appends a slice; values start at zero unless init is given (row-major).
  const Slice& add(const std::string& name, Index rows, Index cols, bool trainable,
                   const double* init = nullptr);
  const Slice& add(const std::string& name, const Mat& value, bool trainable);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Slice& slice(const std::string& name) const;
  const std::vector<Slice>& slices() const { return slices_; }
  void set_trainable(const std::string& name, bool trainable);

  Index size() const { return values.size(); }
  Mat get(const std::string& name) const;
  void set(const std::string& name, const Mat& value);
  // Copy of the slice as a column vector (for 1-column slices).
  Vec get_vec(const std::string& name) const;
  // 1 on trainable entries, 0 elsewhere.
  Vec trainable_mask() const;

  Vec values;

 private:
  std::vector<Slice> slices_;
  std::unordered_map<std::string, std::size_t> index_;
};

using NodeId = std::int32_t;

struct Shape {
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

// Arguments handed to a registered custom primitive. Input gradients that are
// not needed are null; backward accumulates into the non-null ones.
struct CustomCall {
  std::vector<const double*> in;
  std::vector<Shape> in_shapes;
  double* out = nullptr;
  Shape out_shape;
  const double* gout = nullptr;
  std::vector<double*> gin;
  const void* ctx = nullptr;
};

struct CustomPrimitive {
  std::function<Shape(const std::vector<Shape>&, const void* ctx)> shape;
  std::function<void(CustomCall&)> forward;
  std::function<void(CustomCall&)> backward;
};

// Registry is process-global; registration is expected at startup.
void register_primitive(const std::string& name, CustomPrimitive prim);
bool primitive_registered(const std::string& name);

// Reverse-mode tape over matrices of shape (signal rows x batch columns),
// stored row-major in one arena. Rebuilt for every batch.
class Tape {
 public:
  explicit Tape(const ParamVector* params = nullptr);

  void reset(const ParamVector* params);

  NodeId param(const std::string& name);
  NodeId constant(Index rows, Index cols, const double* row_major);
  NodeId constant(const Mat& m);
  NodeId scalar(double v);

  // Elementwise with broadcasting of an (r x 1) column or a (1 x 1) scalar.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId scale(NodeId a, double s);
  NodeId matmul(NodeId a, NodeId b);
  NodeId matvec(NodeId a, NodeId b) { return matmul(a, b); }
  NodeId dot(NodeId a, NodeId b);  // (1 x 1) sum of products, same shapes
  NodeId tanh(NodeId a);
  NodeId pow(NodeId a, int n);
  NodeId reciprocal(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sqnorm(NodeId a);
  NodeId slice_rows(NodeId a, Index r0, Index n);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId custom(const std::string& name, const std::vector<NodeId>& inputs,
                std::shared_ptr<const void> ctx = nullptr);

  Shape shape(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].shape; }
  const double* value(NodeId n) const;
  double scalar_value(NodeId n) const;
  Mat value_mat(NodeId n) const;
  bool requires_grad(NodeId n) const { return nodes_[static_cast<std::size_t>(n)].needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Seeds d(out)/d(out) = 1 for a (1 x 1) node and accumulates dL/dparams
  // into grad (resized to the parameter count if empty).
  void backward(NodeId out, Vec& grad);

 private:
  enum class Op : std::uint8_t {
    Param, Const, Add, Sub, Mul, Neg, Scale, MatMul, Dot, Tanh, Pow, Recip,
    Sum, Mean, SqNorm, Slice, Concat, Custom
  };
  struct Node {
    Op op;
    Shape shape;
    std::size_t offset = 0;
    NodeId a = -1, b = -1;
    double s = 0.0;   // scale factor / exponent
    Index i0 = 0;     // slice start, param offset
    std::vector<NodeId> inputs;  // concat / custom
    const CustomPrimitive* prim = nullptr;
    std::shared_ptr<const void> ctx;
    bool needs_grad = false;
  };

  NodeId push(Node n);
  double* val(NodeId n) { return arena_.data() + nodes_[static_cast<std::size_t>(n)].offset; }
  const double* val(NodeId n) const { return arena_.data() + nodes_[static_cast<std::size_t>(n)].offset; }
  NodeId elementwise(Op op, NodeId a, NodeId b);
  void check_finite(NodeId n) const;

  const ParamVector* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<double> arena_;
  std::vector<double> grads_;
};

struct GradResult {
  double value = 0.0;
  Vec grad;
};

using LossBuilder = std::function<NodeId(Tape&, const ParamVector&)>;

// Gradient is zero on non-trainable slices.
GradResult grad(const LossBuilder& builder, const ParamVector& params);
double eval_loss(const LossBuilder& builder, const ParamVector& params);

// Worst relative error over coords between the tape gradient and central
// differences; denominator max(|analytic|, |numeric|, 1e-8).
double check_grad(const LossBuilder& builder, const ParamVector& params,
                  const std::vector<Index>& coords, double step);

}  // namespace lfr::ad
