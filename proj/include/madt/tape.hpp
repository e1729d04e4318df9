#pragma once
// Reverse-mode gradient tape.
//
// Ops execute eagerly and record nodes. Every op's backward rule is itself
// expressed through tape ops, so gradients() returns graph-building Vars and
// can be differentiated again (needed for the gradient penalty, which takes
// gradients of a gradient norm).
#include <array>
#include <cstdint>
#include <vector>

#include "madt/tensor.hpp"

namespace madt {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Neg,
  Scale,      // c * x
  AddScalar,  // x + c
  PowConst,   // x^c, x > 0 required for non-integer c
  Exp,
  Abs,
  Relu,
  LeakyRelu,
  Sigmoid,
  Tanh,
  Reshape,
  Broadcast,  // to shape with matching rank, input dims in {1, out}
  ReduceSum,  // keepdim, axes bitmask
  SliceAxis,
  InsertAxis,  // place into zeros along axis (adjoint of SliceAxis)
  Crop2d,      // spatial window copy (NCHW)
  Uncrop2d,    // scatter window into zeros (adjoint of Crop2d)
  PadZero2d,
  PadCircular2d,
  FoldCircular2d,  // adjoint of PadCircular2d
  Conv2d,          // valid cross-correlation, no bias
  Conv2dDx,        // input-gradient of Conv2d (transposed conv)
  Conv2dDw,        // weight-gradient of Conv2d
  MatMul,
  Transpose2,
  Resize,  // nearest/bilinear spatial resize or its adjoint
};

struct NodeAttrs {
  double c = 0.0;
  std::array<int64_t, 6> i{0, 0, 0, 0, 0, 0};
  uint8_t flags = 0;  // Resize: bit0 bilinear, bit1 adjoint
  Shape shape;        // target shape for Reshape/Broadcast
};

struct Node {
  Op op = Op::Leaf;
  std::array<int32_t, 2> in{-1, -1};
  NodeAttrs attrs;
  Tensor value;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int32_t node = -1;
  Tensor value;

  bool defined() const { return tape != nullptr; }
  const Shape& shape() const { return value.shape(); }
  int64_t numel() const { return value.numel(); }
};

class Tape {
 public:
  Var leaf(Tensor v);
  Var constant(Tensor v) { return leaf(std::move(v)); }
  Var scalar(real v) { return leaf(Tensor::scalar(v)); }

  size_t size() const { return nodes_.size(); }
  const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }

  // d(out)/d(wrt[k]) for scalar out. The returned Vars live on this tape and
  // are themselves differentiable. Unreachable wrt entries get zero tensors.
  std::vector<Var> gradients(const Var& out, const std::vector<Var>& wrt);

  Var push(Op op, int32_t a, int32_t b, NodeAttrs attrs, Tensor value);

 private:
  std::vector<Node> nodes_;
  std::vector<Var> vjp(int32_t id, const Var& gy);
  friend Var wrap(Tape& t, int32_t id);
};

// --- primitive builders ---------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, real c);
Var add_scalar(const Var& a, real c);
Var pow_const(const Var& a, real c);
Var vexp(const Var& a);
Var vabs(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, real slope);
Var sigmoid(const Var& a);
Var vtanh(const Var& a);
Var reshape(const Var& a, Shape s);
Var broadcast_to(const Var& a, Shape s);
Var reduce_sum_keepdim(const Var& a, uint32_t axes_mask);
Var slice_axis(const Var& a, int axis, int64_t off, int64_t len);
Var insert_axis(const Var& a, int axis, int64_t off, int64_t out_len);
Var crop2d(const Var& a, int64_t y0, int64_t x0, int64_t h, int64_t w);
Var uncrop2d(const Var& a, int64_t y0, int64_t x0, int64_t H, int64_t W);
enum class PadMode { Zero, Circular };
Var pad2d(const Var& a, int64_t p, PadMode mode);
Var conv2d_raw(const Var& x, const Var& w, int64_t stride);
Var conv2d_dx_raw(const Var& gy, const Var& w, int64_t stride, int64_t H, int64_t W);
Var conv2d_dw_raw(const Var& x, const Var& gy, int64_t stride, int64_t kh, int64_t kw);
Var matmul(const Var& a, const Var& b);
Var transpose2(const Var& a);
enum class ResizeMode { Nearest, Bilinear };
Var resize2d(const Var& a, ResizeMode mode, int64_t out_h, int64_t out_w);

// --- compositions ----------------------------------------------------------
Var stop_grad(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_axes(const Var& a, uint32_t axes_mask);
Var square(const Var& a);
Var div_positive(const Var& a, const Var& b);
Var concat_channels(const std::vector<Var>& parts);

// Spec-facing resample: scale restricted to {0.5, 2}; 0.5 on odd spatial dims
// raises OddDimension.
Var resample(const Var& a, double scl, ResizeMode mode);

}  // namespace madt
