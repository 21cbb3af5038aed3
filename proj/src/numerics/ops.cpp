#include "dyndiff/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "kernels.hpp"

namespace dyndiff::numerics {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
  T probe = T(0);
  for (T v : values) probe += v * T(0);
  if (std::isfinite(probe)) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value produced by ") + op + " at flat index " +
                         std::to_string(i));
    }
  }
}

/// Wraps a computed value into a graph node; the backward closure is kept
/// only when some input needs a gradient and recording is enabled.
template <typename T, typename Backward>
Tensor<T> record(const char* op, Shape shape, std::vector<T> value,
                 std::vector<NodePtr<T>> inputs, Backward&& backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || (in && in->requires_grad);
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward = std::forward<Backward>(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Gradient buffer of parent i, or nullptr when that parent needs none.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  if (i >= self.parents.size() || !self.parents[i]) return nullptr;
  Node<T>& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

template <typename T>
const std::vector<T>& parent_value(Node<T>& self, std::size_t i) {
  return self.parents[i]->value;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_rank(const char* op, const char* what, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(s));
  }
}

template <typename T>
std::size_t rows_of(const Shape& s) {
  return s.empty() ? 0 : numel(s) / s.back();
}

template <typename T, typename F, typename G>
Tensor<T> elementwise_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F forward,
                             G backward) {
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
  const auto& av = a.node().value;
  const auto& bv = b.node().value;
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[i], bv[i]);
  return record<T>(op, a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                   [backward](Node<T>& self) {
                     const auto& x = parent_value(self, 0);
                     const auto& y = parent_value(self, 1);
                     T* gx = parent_grad(self, 0);
                     T* gy = parent_grad(self, 1);
                     for (std::size_t i = 0; i < self.grad.size(); ++i) {
                       auto [dx, dy] = backward(x[i], y[i], self.grad[i]);
                       if (gx) gx[i] += dx;
                       if (gy) gy[i] += dy;
                     }
                   });
}

template <typename T, typename F, typename G>
Tensor<T> elementwise_unary(const char* op, const Tensor<T>& a, F forward, G derivative) {
  const auto& av = a.node().value;
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(av[i]);
  return record<T>(op, a.shape(), std::move(out), {a.node_ptr()},
                   [derivative](Node<T>& self) {
                     const auto& x = parent_value(self, 0);
                     T* gx = parent_grad(self, 0);
                     if (!gx) return;
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       gx[i] += self.grad[i] * derivative(x[i], self.value[i]);
                   });
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

/// x [rows, in] * W [in, out] + bias, shared by dense and matmul.
template <typename T>
Tensor<T> affine(const char* op, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank(op, "weight", ws, 2);
  if (xs.back() != ws[0]) shape_mismatch(op, xs, ws);
  const std::size_t in = ws[0];
  const std::size_t out = ws[1];
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out)) {
    shape_mismatch(op, ws, bias.shape());
  }
  const std::size_t rows = rows_of<T>(xs);
  std::vector<T> y(rows * out, T(0));
  if (bias.defined()) {
    const auto& bv = bias.node().value;
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), y.begin() + r * out);
  }
  kernels::gemm_nn(rows, out, in, x.node().value.data(), in, weight.node().value.data(), out,
                   y.data(), out);
  Shape ys = xs;
  ys.back() = out;
  std::vector<NodePtr<T>> inputs{x.node_ptr(), weight.node_ptr()};
  if (bias.defined()) inputs.push_back(bias.node_ptr());
  return record<T>(op, std::move(ys), std::move(y), std::move(inputs),
                   [rows, in, out](Node<T>& self) {
                     const T* dy = self.grad.data();
                     const auto& xv = parent_value(self, 0);
                     const auto& wv = parent_value(self, 1);
                     if (T* dx = parent_grad(self, 0)) {
                       auto wt = kernels::transpose(wv.data(), in, out);
                       kernels::gemm_nn(rows, in, out, dy, out, wt.data(), in, dx, in);
                     }
                     if (T* dw = parent_grad(self, 1)) {
                       kernels::gemm_tn(in, out, rows, xv.data(), in, dy, out, dw, out);
                     }
                     if (T* db = parent_grad(self, 2)) {
                       for (std::size_t r = 0; r < rows; ++r)
                         kernels::axpy(out, T(1), dy + r * out, db);
                     }
                   });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>{g, g}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>{g, -g}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>{g * y, g * x}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return elementwise_unary<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return elementwise_unary<T>(
      "add_scalar", a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    shape_mismatch("add_broadcast", as, bs);
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  std::vector<T> out = a.node().value;
  const auto& bv = b.node().value;
  for (std::size_t o = 0; o < outer; ++o) kernels::axpy(inner, T(1), bv.data(), out.data() + o * inner);
  return record<T>("add_broadcast", as, std::move(out), {a.node_ptr(), b.node_ptr()},
                   [outer, inner](Node<T>& self) {
                     const T* g = self.grad.data();
                     if (T* ga = parent_grad(self, 0)) kernels::axpy(outer * inner, T(1), g, ga);
                     if (T* gb = parent_grad(self, 1)) {
                       for (std::size_t o = 0; o < outer; ++o) kernels::axpy(inner, T(1), g + o * inner, gb);
                     }
                   });
}

template <typename T>
Tensor<T> add_over_time(const Tensor<T>& x, const Tensor<T>& v) {
  const Shape& xs = x.shape();
  const Shape& vs = v.shape();
  require_rank("add_over_time", "x", xs, 3);
  require_rank("add_over_time", "v", vs, 2);
  if (xs[0] != vs[0] || xs[2] != vs[1]) shape_mismatch("add_over_time", xs, vs);
  const std::size_t batch = xs[0], steps = xs[1], width = xs[2];
  std::vector<T> out = x.node().value;
  const auto& vv = v.node().value;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t)
      kernels::axpy(width, T(1), vv.data() + b * width, out.data() + (b * steps + t) * width);
  return record<T>("add_over_time", xs, std::move(out), {x.node_ptr(), v.node_ptr()},
                   [batch, steps, width](Node<T>& self) {
                     const T* g = self.grad.data();
                     if (T* gx = parent_grad(self, 0)) kernels::axpy(self.grad.size(), T(1), g, gx);
                     if (T* gv = parent_grad(self, 1)) {
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t t = 0; t < steps; ++t)
                           kernels::axpy(width, T(1), g + (b * steps + t) * width, gv + b * width);
                     }
                   });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", "lhs", a.shape(), 2);
  return affine<T>("matmul", a, b, Tensor<T>{});
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return affine<T>("dense", x, weight, bias);
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require_rank("bmm", "lhs", as, 3);
  require_rank("bmm", "rhs", bs, 3);
  const std::size_t groups = as[0], m = as[1], k = as[2];
  const std::size_t n = transpose_b ? bs[1] : bs[2];
  const std::size_t bk = transpose_b ? bs[2] : bs[1];
  if (bs[0] != groups || bk != k) shape_mismatch("bmm", as, bs);
  std::vector<T> c(groups * m * n, T(0));
  const T* av = a.node().value.data();
  const T* bv = b.node().value.data();
  for (std::size_t g = 0; g < groups; ++g) {
    const T* ag = av + g * m * k;
    const T* bg = bv + g * k * n;
    if (transpose_b) {
      auto bt = kernels::transpose(bg, n, k);
      kernels::gemm_nn(m, n, k, ag, k, bt.data(), n, c.data() + g * m * n, n);
    } else {
      kernels::gemm_nn(m, n, k, ag, k, bg, n, c.data() + g * m * n, n);
    }
  }
  return record<T>("bmm", Shape{groups, m, n}, std::move(c), {a.node_ptr(), b.node_ptr()},
                   [groups, m, n, k, transpose_b](Node<T>& self) {
                     const auto& av = parent_value(self, 0);
                     const auto& bv = parent_value(self, 1);
                     T* da = parent_grad(self, 0);
                     T* db = parent_grad(self, 1);
                     for (std::size_t g = 0; g < groups; ++g) {
                       const T* dc = self.grad.data() + g * m * n;
                       const T* ag = av.data() + g * m * k;
                       const T* bg = bv.data() + g * k * n;
                       if (transpose_b) {
                         // c = a b^T, b is [n, k]
                         if (da) kernels::gemm_nn(m, k, n, dc, n, bg, k, da + g * m * k, k);
                         if (db) kernels::gemm_tn(n, k, m, dc, n, ag, k, db + g * k * n, k);
                       } else {
                         if (da) {
                           auto bt = kernels::transpose(bg, k, n);
                           kernels::gemm_nn(m, k, n, dc, n, bt.data(), k, da + g * m * k, k);
                         }
                         if (db) kernels::gemm_tn(k, n, m, ag, k, dc, n, db + g * k * n, n);
                       }
                     }
                   });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t dilation, Padding padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank("conv1d", "input", xs, 3);
  require_rank("conv1d", "weight", ws, 3);
  if (dilation < 1) throw std::invalid_argument("conv1d: dilation must be >= 1");
  if (xs[2] != ws[1]) shape_mismatch("conv1d", xs, ws);
  const std::size_t batch = xs[0], steps = xs[1], cin = xs[2];
  const std::size_t taps = ws[0], cout = ws[2];
  if (padding == Padding::same && taps % 2 == 0) {
    throw ShapeError("conv1d: 'same' padding needs an odd tap count, got " + std::to_string(taps));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_mismatch("conv1d", ws, bias.shape());
  }

  // Input offset of tap k relative to the output position.
  std::vector<long> offsets(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    long centre = padding == Padding::causal ? static_cast<long>(taps) - 1
                                             : static_cast<long>(taps - 1) / 2;
    offsets[k] = (static_cast<long>(k) - centre) * static_cast<long>(dilation);
  }
  auto valid = [steps](long off) {
    long lo = std::max(0L, -off);
    long hi = std::min(static_cast<long>(steps), static_cast<long>(steps) - off);
    return std::pair<long, long>{lo, hi};
  };

  std::vector<T> y(batch * steps * cout, T(0));
  if (bias.defined()) {
    const auto& bv = bias.node().value;
    for (std::size_t r = 0; r < batch * steps; ++r) std::copy(bv.begin(), bv.end(), y.begin() + r * cout);
  }
  const T* xv = x.node().value.data();
  const T* wv = weight.node().value.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < taps; ++k) {
      auto [lo, hi] = valid(offsets[k]);
      if (hi <= lo) continue;
      kernels::gemm_nn(static_cast<std::size_t>(hi - lo), cout, cin,
                       xv + (b * steps + lo + offsets[k]) * cin, cin, wv + k * cin * cout, cout,
                       y.data() + (b * steps + lo) * cout, cout);
    }
  }

  std::vector<NodePtr<T>> inputs{x.node_ptr(), weight.node_ptr()};
  if (bias.defined()) inputs.push_back(bias.node_ptr());
  return record<T>("conv1d", Shape{batch, steps, cout}, std::move(y), std::move(inputs),
                   [=](Node<T>& self) {
                     const T* dy = self.grad.data();
                     const T* xv = parent_value(self, 0).data();
                     const T* wv = parent_value(self, 1).data();
                     T* dx = parent_grad(self, 0);
                     T* dw = parent_grad(self, 1);
                     T* db = parent_grad(self, 2);
                     std::vector<std::vector<T>> wt;
                     if (dx) {
                       for (std::size_t k = 0; k < taps; ++k)
                         wt.push_back(kernels::transpose(wv + k * cin * cout, cin, cout));
                     }
                     for (std::size_t b = 0; b < batch; ++b) {
                       for (std::size_t k = 0; k < taps; ++k) {
                         auto [lo, hi] = valid(offsets[k]);
                         if (hi <= lo) continue;
                         const std::size_t len = static_cast<std::size_t>(hi - lo);
                         const T* dyb = dy + (b * steps + lo) * cout;
                         const std::size_t xrow = b * steps + lo + offsets[k];
                         if (dx) kernels::gemm_nn(len, cin, cout, dyb, cout, wt[k].data(), cin, dx + xrow * cin, cin);
                         if (dw) kernels::gemm_tn(cin, cout, len, xv + xrow * cin, cin, dyb, cout, dw + k * cin * cout, cout);
                       }
                     }
                     if (db) {
                       for (std::size_t r = 0; r < batch * steps; ++r) kernels::axpy(cout, T(1), dy + r * cout, db);
                     }
                   });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  const Shape& xs = x.shape();
  const std::size_t width = xs.back();
  if (gamma.shape() != Shape{width}) shape_mismatch("layer_norm", xs, gamma.shape());
  if (beta.shape() != Shape{width}) shape_mismatch("layer_norm", xs, beta.shape());
  const std::size_t rows = rows_of<T>(xs);
  const auto& xv = x.node().value;
  const auto& gv = gamma.node().value;
  const auto& bv = beta.node().value;
  std::vector<T> y(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * width;
    T mu = T(0);
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<T>(width);
    T var = T(0);
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(width);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[r] = inv;
    for (std::size_t j = 0; j < width; ++j) {
      const T h = (row[j] - mu) * inv;
      xhat[r * width + j] = h;
      y[r * width + j] = h * gv[j] + bv[j];
    }
  }
  return record<T>("layer_norm", xs, std::move(y), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
                   [rows, width, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
                     const T* dy = self.grad.data();
                     const auto& gv = parent_value(self, 1);
                     T* dx = parent_grad(self, 0);
                     T* dg = parent_grad(self, 1);
                     T* dbeta = parent_grad(self, 2);
                     std::vector<T> gh(width);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* dyr = dy + r * width;
                       const T* hr = xhat.data() + r * width;
                       if (dg) for (std::size_t j = 0; j < width; ++j) dg[j] += dyr[j] * hr[j];
                       if (dbeta) for (std::size_t j = 0; j < width; ++j) dbeta[j] += dyr[j];
                       if (!dx) continue;
                       T m1 = T(0), m2 = T(0);
                       for (std::size_t j = 0; j < width; ++j) {
                         gh[j] = dyr[j] * gv[j];
                         m1 += gh[j];
                         m2 += gh[j] * hr[j];
                       }
                       m1 /= static_cast<T>(width);
                       m2 /= static_cast<T>(width);
                       for (std::size_t j = 0; j < width; ++j)
                         dx[r * width + j] += inv_std[r] * (gh[j] - m1 - hr[j] * m2);
                     }
                   });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  const std::size_t width = xs.back();
  const std::size_t rows = rows_of<T>(xs);
  const auto& xv = x.node().value;
  std::vector<T> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * width;
    T* out = y.data() + r * width;
    const T top = *std::max_element(row, row + width);
    T total = T(0);
    for (std::size_t j = 0; j < width; ++j) {
      out[j] = std::exp(row[j] - top);
      total += out[j];
    }
    for (std::size_t j = 0; j < width; ++j) out[j] /= total;
  }
  return record<T>("softmax", xs, std::move(y), {x.node_ptr()}, [rows, width](Node<T>& self) {
    T* dx = parent_grad(self, 0);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = self.value.data() + r * width;
      const T* gr = self.grad.data() + r * width;
      T dot = T(0);
      for (std::size_t j = 0; j < width; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < width; ++j) dx[r * width + j] += yr[j] * (gr[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return elementwise_unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return elementwise_unary<T>(
      "silu", x, [](T v) { return v * sigmoid(v); },
      [](T v, T) {
        const T s = sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const Shape& xs = x.shape();
  require_rank("split_heads", "input", xs, 3);
  if (heads == 0 || xs[2] % heads != 0) {
    throw ShapeError("split_heads: width " + std::to_string(xs[2]) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t batch = xs[0], steps = xs[1], width = xs[2], dh = width / heads;
  const auto& xv = x.node().value;
  std::vector<T> y(xv.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < steps; ++t)
        std::copy_n(xv.data() + (b * steps + t) * width + h * dh, dh,
                    y.data() + ((b * heads + h) * steps + t) * dh);
  return record<T>("split_heads", Shape{batch * heads, steps, dh}, std::move(y), {x.node_ptr()},
                   [=](Node<T>& self) {
                     T* dx = parent_grad(self, 0);
                     if (!dx) return;
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t h = 0; h < heads; ++h)
                         for (std::size_t t = 0; t < steps; ++t)
                           kernels::axpy(dh, T(1), self.grad.data() + ((b * heads + h) * steps + t) * dh,
                                         dx + (b * steps + t) * width + h * dh);
                   });
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t heads) {
  const Shape& xs = x.shape();
  require_rank("merge_heads", "input", xs, 3);
  if (heads == 0 || xs[0] % heads != 0) {
    throw ShapeError("merge_heads: leading extent " + std::to_string(xs[0]) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = xs[0] / heads, steps = xs[1], dh = xs[2], width = dh * heads;
  const auto& xv = x.node().value;
  std::vector<T> y(xv.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < steps; ++t)
        std::copy_n(xv.data() + ((b * heads + h) * steps + t) * dh, dh,
                    y.data() + (b * steps + t) * width + h * dh);
  return record<T>("merge_heads", Shape{batch, steps, width}, std::move(y), {x.node_ptr()},
                   [=](Node<T>& self) {
                     T* dx = parent_grad(self, 0);
                     if (!dx) return;
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t h = 0; h < heads; ++h)
                         for (std::size_t t = 0; t < steps; ++t)
                           kernels::axpy(dh, T(1), self.grad.data() + (b * steps + t) * width + h * dh,
                                         dx + ((b * heads + h) * steps + t) * dh);
                   });
}

template <typename T>
AttentionResult<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                 const Tensor<T>& v, std::size_t heads) {
  if (q.shape() != k.shape()) shape_mismatch("attention", q.shape(), k.shape());
  if (q.shape() != v.shape()) shape_mismatch("attention", q.shape(), v.shape());
  require_rank("attention", "queries", q.shape(), 3);
  const std::size_t head_dim = q.dim(2) / (heads == 0 ? 1 : heads);
  auto qh = split_heads(q, heads);
  auto kh = split_heads(k, heads);
  auto vh = split_heads(v, heads);
  auto scores = scale(bmm(qh, kh, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim))));
  auto weights = softmax(scores);
  auto out = merge_heads(bmm(weights, vh), heads);
  return {out, weights};
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.node().value) total += v;
  return record<T>("sum", Shape{1}, {total}, {x.node_ptr()}, [](Node<T>& self) {
    T* dx = parent_grad(self, 0);
    if (!dx) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mse", a.shape(), b.shape());
  const auto& av = a.node().value;
  const auto& bv = b.node().value;
  T total = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) total += (av[i] - bv[i]) * (av[i] - bv[i]);
  const T inv_n = T(1) / static_cast<T>(av.size());
  return record<T>("mse", Shape{1}, {total * inv_n}, {a.node_ptr(), b.node_ptr()},
                   [inv_n](Node<T>& self) {
                     const auto& av = parent_value(self, 0);
                     const auto& bv = parent_value(self, 1);
                     T* da = parent_grad(self, 0);
                     T* db = parent_grad(self, 1);
                     const T g = self.grad[0] * T(2) * inv_n;
                     for (std::size_t i = 0; i < av.size(); ++i) {
                       const T d = g * (av[i] - bv[i]);
                       if (da) da[i] += d;
                       if (db) db[i] -= d;
                     }
                   });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_mismatch("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) shape_mismatch("concat", first, s);
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];
  std::vector<T> y(numel(out_shape));
  std::vector<NodePtr<T>> inputs;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& pv = parts[i].node().value;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * extents[i] * inner, extents[i] * inner,
                  y.data() + (o * total + offset) * inner);
    offset += extents[i];
    inputs.push_back(parts[i].node_ptr());
  }
  return record<T>("concat", std::move(out_shape), std::move(y), std::move(inputs),
                   [outer, inner, total, extents](Node<T>& self) {
                     std::size_t offset = 0;
                     for (std::size_t i = 0; i < extents.size(); ++i) {
                       if (T* dp = parent_grad(self, i)) {
                         for (std::size_t o = 0; o < outer; ++o)
                           kernels::axpy(extents[i] * inner, T(1),
                                         self.grad.data() + (o * total + offset) * inner,
                                         dp + o * extents[i] * inner);
                       }
                       offset += extents[i];
                     }
                   });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || length == 0 || start + length > xs[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                     " invalid for shape " + shape_str(xs));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= xs[d];
  for (std::size_t d = axis + 1; d < xs.size(); ++d) inner *= xs[d];
  const std::size_t full = xs[axis];
  Shape ys = xs;
  ys[axis] = length;
  const auto& xv = x.node().value;
  std::vector<T> y(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + (o * full + start) * inner, length * inner, y.data() + o * length * inner);
  return record<T>("slice", std::move(ys), std::move(y), {x.node_ptr()},
                   [outer, inner, full, start, length](Node<T>& self) {
                     T* dx = parent_grad(self, 0);
                     if (!dx) return;
                     for (std::size_t o = 0; o < outer; ++o)
                       kernels::axpy(length * inner, T(1), self.grad.data() + o * length * inner,
                                     dx + (o * full + start) * inner);
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  return record<T>("reshape", std::move(shape), x.node().value, {x.node_ptr()}, [](Node<T>& self) {
    if (T* dx = parent_grad(self, 0)) kernels::axpy(self.grad.size(), T(1), self.grad.data(), dx);
  });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index) {
  auto part = slice(x, axis, index, 1);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  if (s.empty()) s.push_back(1);
  return reshape(part, std::move(s));
}

#define DYNDIFF_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> add_broadcast(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add_over_time(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                               \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                            Padding);                                                              \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> softmax(const Tensor<T>&);                                                   \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> silu(const Tensor<T>&);                                                      \
  template Tensor<T> split_heads(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> merge_heads(const Tensor<T>&, std::size_t);                                  \
  template AttentionResult<T> scaled_dot_product_attention(const Tensor<T>&, const Tensor<T>&,    \
                                                           const Tensor<T>&, std::size_t);        \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                          \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);              \
  template Tensor<T> select(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

DYNDIFF_INSTANTIATE_OPS(float)
DYNDIFF_INSTANTIATE_OPS(double)

#undef DYNDIFF_INSTANTIATE_OPS

}  // namespace dyndiff::numerics
