#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldr/errors.hpp"

namespace ldr {

using Scalar = double;
using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// Backward closure: receives the output it belongs to and d(loss)/d(output).
using BackwardFn = std::function<void(const TensorImpl& out, const Vec& grad_out)>;

struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  Vec data;
  Vec grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  void accumulate_grad(const Vec& g);
};

/// Dense row-major tensor of doubles with an optional reverse-mode tape.
///
/// A Tensor is a shared handle; copies alias the same storage. Values are
/// treated as immutable once an op has consumed them, except through
/// mutable_data() on leaves (parameter updates) and gradient accumulation.
class Tensor {
 public:
  Tensor();
  explicit Tensor(std::shared_ptr<TensorImpl> impl);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Scalar value);
  static Tensor from(const Shape& shape, std::span<const Scalar> values);
  static Tensor from(const Shape& shape, Vec values);
  static Tensor scalar(Scalar value);

  const Shape& shape() const { return impl_->shape; }
  Index dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t ndim() const { return impl_->shape.size(); }
  Index size() const { return impl_->data.size(); }

  const Vec& data() const { return impl_->data; }
  Vec& mutable_data() { return impl_->data; }
  Scalar operator[](Index i) const { return impl_->data[i]; }
  Scalar item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return impl_->has_grad; }
  const Vec& grad() const;
  void zero_grad();

  /// True when this tensor was produced by a recorded op.
  bool on_tape() const { return static_cast<bool>(impl_->node); }

  /// Deep copy of values only; the result is a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Populates grad on every requires_grad tensor reachable from `loss`.
void backward(const Tensor& loss);

// Elementwise and scalar ops. Shapes must match exactly; there is no broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor frobenius_norm_sq(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& shape);
/// Concatenation along the leading dimension (channels for c×h×w tensors).
Tensor concat(const Tensor& a, const Tensor& b);
Tensor detach(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Cross-correlation of x[c_in×h×w] with k[c_out×c_in×kh×kw], zero padded.
Tensor conv2d(const Tensor& x, const Tensor& k, Index padding);
/// Patch matrix [c_in·kh·kw × h'·w'] such that conv2d == reshape(K2d × im2col).
Tensor im2col(const Tensor& x, Index kh, Index kw, Index padding);

Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
/// x[c×h×w] + b[c] added to every spatial position of channel c.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
/// v[c] → [c×h×w] with v[c] repeated over the plane.
Tensor broadcast_spatial(const Tensor& v, Index h, Index w);
/// Row i of a 2-D table, as a 1-D tensor.
Tensor row(const Tensor& table, Index i);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }

}  // namespace ldr
