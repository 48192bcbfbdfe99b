#include "ldr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ldr {

namespace {

thread_local bool g_grad_enabled = true;

using ImplPtr = std::shared_ptr<TensorImpl>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

Tensor make_result(Shape shape, Vec data, const char* op, std::vector<ImplPtr> inputs, BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  const bool record = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                    [](const ImplPtr& p) { return p->requires_grad; });
  if (record) {
    impl->requires_grad = true;
    auto node = std::make_shared<TapeNode>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

inline void push_grad(const ImplPtr& p, const Vec& g) {
  if (p->requires_grad) p->accumulate_grad(g);
}

// Overflow-free logistic function, vectorized.
Vec sigmoid_vec(const Vec& x) {
  const Eigen::ArrayXd e = (-x.array().abs()).exp();
  const Eigen::ArrayXd inv = 1.0 / (1.0 + e);
  return (x.array() >= 0).select(inv, e * inv).matrix();
}

}  // namespace

Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void TensorImpl::accumulate_grad(const Vec& g) {
  if (!has_grad) {
    grad = g;
    has_grad = true;
  } else {
    grad += g;
  }
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {}

Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, Scalar value) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = Vec::Constant(numel(shape), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(const Shape& shape, std::span<const Scalar> values) {
  return from(shape, Vec(Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()))));
}

Tensor Tensor::from(const Shape& shape, Vec values) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Scalar value) { return full({1}, value); }

Scalar Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

const Vec& Tensor::grad() const {
  if (!impl_->has_grad) throw ContractViolation("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.resize(0);
  impl_->has_grad = false;
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractViolation("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractViolation("backward() on a tensor that is not on the tape");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      TensorImpl* child = node->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (TensorImpl* t : order) {
    if (t->node) {
      t->grad.resize(0);
      t->has_grad = false;
    }
  }
  loss.impl()->accumulate_grad(Vec::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->node || !t->has_grad) continue;
    t->node->backward(*t, t->grad);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.shape(), a.data() + b.data(), "add", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl()](const TensorImpl&, const Vec& g) {
                       push_grad(ai, g);
                       push_grad(bi, g);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.shape(), a.data() - b.data(), "sub", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl()](const TensorImpl&, const Vec& g) {
                       push_grad(ai, g);
                       push_grad(bi, -g);
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.shape(), a.data().cwiseProduct(b.data()), "mul", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl()](const TensorImpl&, const Vec& g) {
                       push_grad(ai, g.cwiseProduct(bi->data));
                       push_grad(bi, g.cwiseProduct(ai->data));
                     });
}

Tensor scale(const Tensor& a, Scalar s) {
  return make_result(a.shape(), a.data() * s, "scale", {a.impl()},
                     [ai = a.impl(), s](const TensorImpl&, const Vec& g) { push_grad(ai, g * s); });
}

Tensor add_scalar(const Tensor& a, Scalar s) {
  return make_result(a.shape(), a.data().array() + s, "add_scalar", {a.impl()},
                     [ai = a.impl()](const TensorImpl&, const Vec& g) { push_grad(ai, g); });
}

Tensor relu(const Tensor& a) {
  return make_result(a.shape(), a.data().cwiseMax(0.0), "relu", {a.impl()},
                     [ai = a.impl()](const TensorImpl&, const Vec& g) {
                       push_grad(ai, (ai->data.array() > 0.0).select(g, 0.0));
                     });
}

Tensor silu(const Tensor& a) {
  auto sig = std::make_shared<Vec>(sigmoid_vec(a.data()));
  Vec out = a.data().cwiseProduct(*sig);
  return make_result(a.shape(), std::move(out), "silu", {a.impl()},
                     [ai = a.impl(), sig](const TensorImpl&, const Vec& g) {
                       const auto x = ai->data.array();
                       const auto s = sig->array();
                       push_grad(ai, (g.array() * s * (1.0 + x * (1.0 - s))).matrix());
                     });
}

Tensor tanh(const Tensor& a) {
  return make_result(a.shape(), a.data().array().tanh().matrix(), "tanh", {a.impl()},
                     [ai = a.impl()](const TensorImpl& out, const Vec& g) {
                       push_grad(ai, (g.array() * (1.0 - out.data.array().square())).matrix());
                     });
}

Tensor sigmoid(const Tensor& a) {
  Vec out = sigmoid_vec(a.data());
  return make_result(a.shape(), std::move(out), "sigmoid", {a.impl()},
                     [ai = a.impl()](const TensorImpl& out, const Vec& g) {
                       push_grad(ai, (g.array() * out.data.array() * (1.0 - out.data.array())).matrix());
                     });
}

Tensor sum(const Tensor& a) {
  return make_result({1}, Vec::Constant(1, a.data().sum()), "sum", {a.impl()},
                     [ai = a.impl()](const TensorImpl&, const Vec& g) {
                       push_grad(ai, Vec::Constant(ai->data.size(), g[0]));
                     });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<Scalar>(a.size());
  return make_result({1}, Vec::Constant(1, a.data().sum() / n), "mean", {a.impl()},
                     [ai = a.impl(), n](const TensorImpl&, const Vec& g) {
                       push_grad(ai, Vec::Constant(ai->data.size(), g[0] / n));
                     });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  const auto n = static_cast<Scalar>(a.size());
  Vec diff = a.data() - b.data();
  const Scalar value = diff.squaredNorm() / n;
  return make_result({1}, Vec::Constant(1, value), "mse", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl(), n](const TensorImpl&, const Vec& g) {
                       Vec d = (ai->data - bi->data) * (2.0 * g[0] / n);
                       push_grad(ai, d);
                       push_grad(bi, -d);
                     });
}

Tensor frobenius_norm_sq(const Tensor& a) {
  return make_result({1}, Vec::Constant(1, a.data().squaredNorm()), "frobenius_norm_sq", {a.impl()},
                     [ai = a.impl()](const TensorImpl&, const Vec& g) { push_grad(ai, ai->data * (2.0 * g[0])); });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_result(shape, a.data(), "reshape", {a.impl()},
                     [ai = a.impl()](const TensorImpl&, const Vec& g) { push_grad(ai, g); });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw DimensionError("concat: trailing dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  Vec out(a.size() + b.size());
  out << a.data(), b.data();
  const Index na = a.size();
  return make_result(shape, std::move(out), "concat", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl(), na](const TensorImpl&, const Vec& g) {
                       push_grad(ai, g.head(na));
                       push_grad(bi, g.tail(g.size() - na));
                     });
}

Tensor detach(const Tensor& a) { return a.clone(); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Vec out(m * n);
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), "matmul", {a.impl(), b.impl()},
                     [ai = a.impl(), bi = b.impl(), m, k, n](const TensorImpl&, const Vec& g) {
                       ConstMatMap G(g.data(), m, n);
                       if (ai->requires_grad) {
                         Vec da(m * k);
                         MatMap(da.data(), m, k).noalias() = G * ConstMatMap(bi->data.data(), k, n).transpose();
                         ai->accumulate_grad(da);
                       }
                       if (bi->requires_grad) {
                         Vec db(k * n);
                         MatMap(db.data(), k, n).noalias() = ConstMatMap(ai->data.data(), m, k).transpose() * G;
                         bi->accumulate_grad(db);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose: expected 2-D tensor, got " + shape_str(a.shape()));
  const Index m = a.dim(0), n = a.dim(1);
  Vec out(m * n);
  MatMap(out.data(), n, m) = ConstMatMap(a.data().data(), m, n).transpose();
  return make_result({n, m}, std::move(out), "transpose", {a.impl()},
                     [ai = a.impl(), m, n](const TensorImpl&, const Vec& g) {
                       Vec d(m * n);
                       MatMap(d.data(), m, n) = ConstMatMap(g.data(), n, m).transpose();
                       push_grad(ai, d);
                     });
}

namespace {

struct ConvGeometry {
  Index c, h, w, kh, kw, pad, ho, wo;
  Index rows() const { return c * kh * kw; }
  Index cols() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& x, Index kh, Index kw, Index padding, const char* op) {
  if (x.ndim() != 3) throw DimensionError(std::string(op) + ": expected input c×h×w, got " + shape_str(x.shape()));
  if (kh % 2 == 0 || kw % 2 == 0 || kh <= 0 || kw <= 0) {
    throw ContractViolation(std::string(op) + ": kernel dimensions must be odd, got " + std::to_string(kh) + "x" +
                            std::to_string(kw));
  }
  if (padding < 0) throw ContractViolation(std::string(op) + ": negative padding");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), kh, kw, padding, 0, 0};
  g.ho = g.h + 2 * padding - kh + 1;
  g.wo = g.w + 2 * padding - kw + 1;
  if (g.ho <= 0 || g.wo <= 0) {
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + shape_str(x.shape()) + " with padding " +
                         std::to_string(padding));
  }
  return g;
}

// Output columns [lo, hi) read inside the input row for kernel column j.
std::pair<Index, Index> valid_span(const ConvGeometry& g, Index j) {
  const Index lo = std::clamp<Index>(g.pad - j, 0, g.wo);
  const Index hi = std::clamp<Index>(g.w + g.pad - j, lo, g.wo);
  return {lo, hi};
}

void fill_cols(const ConvGeometry& g, const Scalar* x, Scalar* cols) {
  const Index ncols = g.cols();
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        Scalar* dst = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        const auto [lo, hi] = valid_span(g, j);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy + i - g.pad;
          Scalar* drow = dst + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + g.wo, 0.0);
            continue;
          }
          const Scalar* srow = x + (c * g.h + iy) * g.w + (j - g.pad);
          std::fill(drow, drow + lo, 0.0);
          std::copy(srow + lo, srow + hi, drow + lo);
          std::fill(drow + hi, drow + g.wo, 0.0);
        }
      }
    }
  }
}

void scatter_cols(const ConvGeometry& g, const Scalar* cols, Scalar* dx) {
  const Index ncols = g.cols();
  for (Index c = 0; c < g.c; ++c) {
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const Scalar* src = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        const auto [lo, hi] = valid_span(g, j);
        for (Index oy = 0; oy < g.ho; ++oy) {
          const Index iy = oy + i - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          Scalar* drow = dx + (c * g.h + iy) * g.w + (j - g.pad);
          const Scalar* srow = src + oy * g.wo;
          for (Index ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
        }
      }
    }
  }
}

}  // namespace

Tensor im2col(const Tensor& x, Index kh, Index kw, Index padding) {
  const ConvGeometry g = conv_geometry(x, kh, kw, padding, "im2col");
  Vec cols(g.rows() * g.cols());
  fill_cols(g, x.data().data(), cols.data());
  return make_result({g.rows(), g.cols()}, std::move(cols), "im2col", {x.impl()},
                     [xi = x.impl(), g](const TensorImpl&, const Vec& grad) {
                       Vec dx = Vec::Zero(xi->data.size());
                       scatter_cols(g, grad.data(), dx.data());
                       push_grad(xi, dx);
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& k, Index padding) {
  if (k.ndim() != 4) throw DimensionError("conv2d: expected kernel c_out×c_in×kh×kw, got " + shape_str(k.shape()));
  const ConvGeometry g = conv_geometry(x, k.dim(2), k.dim(3), padding, "conv2d");
  if (k.dim(1) != g.c) {
    throw DimensionError("conv2d: kernel " + shape_str(k.shape()) + " expects " + std::to_string(k.dim(1)) +
                         " input channels, input is " + shape_str(x.shape()));
  }
  const Index cout = k.dim(0);
  auto cols = std::make_shared<Vec>(g.rows() * g.cols());
  fill_cols(g, x.data().data(), cols->data());
  Vec out(cout * g.cols());
  MatMap(out.data(), cout, g.cols()).noalias() =
      ConstMatMap(k.data().data(), cout, g.rows()) * ConstMatMap(cols->data(), g.rows(), g.cols());
  return make_result({cout, g.ho, g.wo}, std::move(out), "conv2d", {x.impl(), k.impl()},
                     [xi = x.impl(), ki = k.impl(), g, cout, cols](const TensorImpl&, const Vec& grad) {
                       ConstMatMap G(grad.data(), cout, g.cols());
                       if (ki->requires_grad) {
                         Vec dk(cout * g.rows());
                         MatMap(dk.data(), cout, g.rows()).noalias() =
                             G * ConstMatMap(cols->data(), g.rows(), g.cols()).transpose();
                         ki->accumulate_grad(dk);
                       }
                       if (xi->requires_grad) {
                         Vec dcols(g.rows() * g.cols());
                         MatMap(dcols.data(), g.rows(), g.cols()).noalias() =
                             ConstMatMap(ki->data.data(), cout, g.rows()).transpose() * G;
                         Vec dx = Vec::Zero(xi->data.size());
                         scatter_cols(g, dcols.data(), dx.data());
                         xi->accumulate_grad(dx);
                       }
                     });
}

Tensor avg_pool2(const Tensor& x) {
  if (x.ndim() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
    throw DimensionError("avg_pool2: expected c×h×w with even h, w, got " + shape_str(x.shape()));
  }
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), ho = h / 2, wo = w / 2;
  Vec out(c * ho * wo);
  const Scalar* src = x.data().data();
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < ho; ++y) {
      for (Index xx = 0; xx < wo; ++xx) {
        const Scalar* p = src + (ch * h + 2 * y) * w + 2 * xx;
        out[(ch * ho + y) * wo + xx] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  return make_result({c, ho, wo}, std::move(out), "avg_pool2", {x.impl()},
                     [xi = x.impl(), c, h, w, ho, wo](const TensorImpl&, const Vec& g) {
                       Vec d(c * h * w);
                       for (Index ch = 0; ch < c; ++ch)
                         for (Index y = 0; y < h; ++y)
                           for (Index xx = 0; xx < w; ++xx)
                             d[(ch * h + y) * w + xx] = 0.25 * g[(ch * ho + y / 2) * wo + xx / 2];
                       push_grad(xi, d);
                     });
}

Tensor upsample_nearest2(const Tensor& x) {
  if (x.ndim() != 3) throw DimensionError("upsample_nearest2: expected c×h×w, got " + shape_str(x.shape()));
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), ho = 2 * h, wo = 2 * w;
  Vec out(c * ho * wo);
  const Scalar* src = x.data().data();
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < ho; ++y)
      for (Index xx = 0; xx < wo; ++xx) out[(ch * ho + y) * wo + xx] = src[(ch * h + y / 2) * w + xx / 2];
  return make_result({c, ho, wo}, std::move(out), "upsample_nearest2", {x.impl()},
                     [xi = x.impl(), c, h, w, ho, wo](const TensorImpl&, const Vec& g) {
                       Vec d = Vec::Zero(c * h * w);
                       for (Index ch = 0; ch < c; ++ch)
                         for (Index y = 0; y < ho; ++y)
                           for (Index xx = 0; xx < wo; ++xx) d[(ch * h + y / 2) * w + xx / 2] += g[(ch * ho + y) * wo + xx];
                       push_grad(xi, d);
                     });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() < 1 || b.ndim() != 1 || b.dim(0) != x.dim(0)) {
    throw DimensionError("add_channel_bias: bias " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
  }
  const Index c = x.dim(0), plane = x.size() / c;
  Vec out = x.data();
  for (Index ch = 0; ch < c; ++ch) out.segment(ch * plane, plane).array() += b[ch];
  return make_result(x.shape(), std::move(out), "add_channel_bias", {x.impl(), b.impl()},
                     [xi = x.impl(), bi = b.impl(), c, plane](const TensorImpl&, const Vec& g) {
                       push_grad(xi, g);
                       if (bi->requires_grad) {
                         Vec db(c);
                         for (Index ch = 0; ch < c; ++ch) db[ch] = g.segment(ch * plane, plane).sum();
                         bi->accumulate_grad(db);
                       }
                     });
}

Tensor broadcast_spatial(const Tensor& v, Index h, Index w) {
  if (v.ndim() != 1 || h <= 0 || w <= 0) {
    throw DimensionError("broadcast_spatial: expected a 1-D vector, got " + shape_str(v.shape()));
  }
  const Index c = v.dim(0), plane = h * w;
  Vec out(c * plane);
  for (Index ch = 0; ch < c; ++ch) out.segment(ch * plane, plane).setConstant(v[ch]);
  return make_result({c, h, w}, std::move(out), "broadcast_spatial", {v.impl()},
                     [vi = v.impl(), c, plane](const TensorImpl&, const Vec& g) {
                       Vec d(c);
                       for (Index ch = 0; ch < c; ++ch) d[ch] = g.segment(ch * plane, plane).sum();
                       push_grad(vi, d);
                     });
}

Tensor row(const Tensor& table, Index i) {
  if (table.ndim() != 2 || i < 0 || i >= table.dim(0)) {
    throw DimensionError("row: index " + std::to_string(i) + " out of range for " + shape_str(table.shape()));
  }
  const Index n = table.dim(1);
  return make_result({n}, table.data().segment(i * n, n), "row", {table.impl()},
                     [ti = table.impl(), i, n](const TensorImpl&, const Vec& g) {
                       Vec d = Vec::Zero(ti->data.size());
                       d.segment(i * n, n) = g;
                       push_grad(ti, d);
                     });
}

}  // namespace ldr
