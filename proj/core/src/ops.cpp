#include "hgdrive/ops.hpp"

#include <cmath>
#include <cstddef>

#include "hgdrive/types.hpp"

namespace hgd {

namespace {

using detail::Node;
using detail::grad_buf;

std::string s2(const Tensor& a, const Tensor& b) {
  return shape_str(a.shape()) + " and " + shape_str(b.shape());
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_2d(const Tensor& t, const char* op) {
  require(t.defined() && t.shape().size() == 2,
          std::string(op) + ": expected 2-D tensor, got " +
              (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + s2(a, b));
}

// Elementwise helper: fn(a_i) -> value, dfn(a_i, y_i) -> local derivative.
template <typename F, typename DF>
Tensor unary_elem(const char* op, const Tensor& a, F fn, DF dfn) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fn(av[i]);
  return make_op(op, a.shape(), std::move(out), {a}, [a, dfn](Node& self) {
    if (!a.needs_grad()) return;
    auto& ga = grad_buf(*a.node);
    const auto& av2 = a.data();
    const auto& yv = self.values;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * dfn(av2[i], yv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------- shape ops

Tensor reshape(const Tensor& t, Shape shape) {
  require(t.defined(), "reshape: undefined input");
  require(numel(shape) == t.size(),
          "reshape: cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
  std::vector<double> out = t.data();
  return make_op("reshape", std::move(shape), std::move(out), {t}, [t](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose2d(const Tensor& t) {
  require_2d(t, "transpose2d");
  int r = t.dim(0), c = t.dim(1);
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  const auto& v = t.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = v[static_cast<std::size_t>(i) * c + j];
  return make_op("transpose2d", {c, r}, std::move(out), {t}, [t, r, c](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        g[static_cast<std::size_t>(i) * c + j] += self.grad[static_cast<std::size_t>(j) * r + i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty input list");
  int cols = -1, rows = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (cols < 0) cols = p.dim(1);
    require(p.dim(1) == cols, "concat_rows: column mismatch " + shape_str(p.shape()) +
                                  " vs expected cols " + std::to_string(cols));
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op("concat_rows", {rows, cols}, std::move(out), inputs, [parts](Node& self) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      std::size_t n = static_cast<std::size_t>(p.size());
      if (p.needs_grad()) {
        auto& g = grad_buf(*p.node);
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty input list");
  int rows = -1, cols = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (rows < 0) rows = p.dim(0);
    require(p.dim(0) == rows, "concat_cols: row mismatch " + shape_str(p.shape()) +
                                  " vs expected rows " + std::to_string(rows));
    cols += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  int at = 0;
  for (const Tensor& p : parts) {
    int pc = p.dim(1);
    const auto& v = p.data();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < pc; ++j)
        out[static_cast<std::size_t>(i) * cols + at + j] = v[static_cast<std::size_t>(i) * pc + j];
    at += pc;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op("concat_cols", {rows, cols}, std::move(out), inputs, [parts, rows, cols](Node& self) {
    int at2 = 0;
    for (const Tensor& p : parts) {
      int pc = p.dim(1);
      if (p.needs_grad()) {
        auto& g = grad_buf(*p.node);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < pc; ++j)
            g[static_cast<std::size_t>(i) * pc + j] +=
                self.grad[static_cast<std::size_t>(i) * cols + at2 + j];
      }
      at2 += pc;
    }
  });
}

Tensor slice_rows(const Tensor& t, int begin, int count) {
  require_2d(t, "slice_rows");
  int r = t.dim(0), c = t.dim(1);
  require(begin >= 0 && count > 0 && begin + count <= r,
          "slice_rows: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
              ") out of " + shape_str(t.shape()));
  const auto& v = t.data();
  std::vector<double> out(v.begin() + static_cast<std::size_t>(begin) * c,
                          v.begin() + static_cast<std::size_t>(begin + count) * c);
  return make_op("slice_rows", {count, c}, std::move(out), {t}, [t, begin, c](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    std::size_t off = static_cast<std::size_t>(begin) * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& t, int begin, int count) {
  require_2d(t, "slice_cols");
  int r = t.dim(0), c = t.dim(1);
  require(begin >= 0 && count > 0 && begin + count <= c,
          "slice_cols: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
              ") out of " + shape_str(t.shape()));
  const auto& v = t.data();
  std::vector<double> out(static_cast<std::size_t>(r) * count);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < count; ++j)
      out[static_cast<std::size_t>(i) * count + j] = v[static_cast<std::size_t>(i) * c + begin + j];
  return make_op("slice_cols", {r, count}, std::move(out), {t}, [t, begin, count, r, c](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < count; ++j)
        g[static_cast<std::size_t>(i) * c + begin + j] +=
            self.grad[static_cast<std::size_t>(i) * count + j];
  });
}

// ---------------------------------------------------------- elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op("add", a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    if (a.needs_grad()) {
      auto& g = grad_buf(*a.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.needs_grad()) {
      auto& g = grad_buf(*b.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op("sub", a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    if (a.needs_grad()) {
      auto& g = grad_buf(*a.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.needs_grad()) {
      auto& g = grad_buf(*b.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    const auto& av2 = a.data();
    const auto& bv2 = b.data();
    if (a.needs_grad()) {
      auto& g = grad_buf(*a.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv2[i];
    }
    if (b.needs_grad()) {
      auto& g = grad_buf(*b.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av2[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary_elem("scale", a, [c](double x) { return x * c; },
                    [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_elem("add_scalar", a, [c](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary_elem("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_elem(
      "gelu", a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elem("sigmoid", a,
                    [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_act(const Tensor& a) {
  return unary_elem("tanh", a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_elem(const Tensor& a) {
  return unary_elem("exp", a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log_elem(const Tensor& a) {
  return unary_elem("log", a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

// -------------------------------------------------------------- linear alg

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: incompatible shapes " + s2(a, b));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    const auto& av2 = a.data();
    const auto& bv2 = b.data();
    if (a.needs_grad()) {  // dA = dC * B^T
      auto& g = grad_buf(*a.node);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = &self.grad[static_cast<std::size_t>(i) * n];
          const double* brow = &bv2[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          g[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (b.needs_grad()) {  // dB = A^T * dC
      auto& g = grad_buf(*b.node);
      for (int p = 0; p < k; ++p)
        for (int i = 0; i < m; ++i) {
          double aip = av2[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          const double* grow = &self.grad[static_cast<std::size_t>(i) * n];
          double* grow_b = &g[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) grow_b[j] += aip * grow[j];
        }
    }
  });
}

Tensor add_rows(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_rows");
  require(bias.defined() && bias.shape().size() == 1 && bias.dim(0) == a.dim(1),
          "add_rows: bias shape mismatch " + s2(a, bias));
  int r = a.dim(0), c = a.dim(1);
  const auto& av = a.data();
  const auto& bv = bias.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i) * c + j] = av[static_cast<std::size_t>(i) * c + j] + bv[j];
  return make_op("add_rows", a.shape(), std::move(out), {a, bias}, [a, bias, r, c](Node& self) {
    if (a.needs_grad()) {
      auto& g = grad_buf(*a.node);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bias.needs_grad()) {
      auto& g = grad_buf(*bias.node);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[j] += self.grad[static_cast<std::size_t>(i) * c + j];
    }
  });
}

// ------------------------------------------------------- softmax/layer norm

Tensor softmax_rows(const Tensor& t) {
  require_2d(t, "softmax_rows");
  int r = t.dim(0), c = t.dim(1);
  const auto& v = t.data();
  std::vector<double> out(v.size());
  for (int i = 0; i < r; ++i) {
    const double* row = &v[static_cast<std::size_t>(i) * c];
    double* orow = &out[static_cast<std::size_t>(i) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= sum;
  }
  return make_op("softmax_rows", t.shape(), std::move(out), {t}, [t, r, c](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (int i = 0; i < r; ++i) {
      const double* y = &self.values[static_cast<std::size_t>(i) * c];
      const double* dy = &self.grad[static_cast<std::size_t>(i) * c];
      double s = 0.0;
      for (int j = 0; j < c; ++j) s += dy[j] * y[j];
      double* grow = &g[static_cast<std::size_t>(i) * c];
      for (int j = 0; j < c; ++j) grow[j] += y[j] * (dy[j] - s);
    }
  });
}

Tensor layer_norm_rows(const Tensor& t, const Tensor& gamma, const Tensor& beta, double eps) {
  require_2d(t, "layer_norm_rows");
  int r = t.dim(0), c = t.dim(1);
  require(gamma.defined() && gamma.shape() == Shape{c},
          "layer_norm_rows: gamma shape " + shape_str(gamma.shape()) + " for input " +
              shape_str(t.shape()));
  require(beta.defined() && beta.shape() == Shape{c},
          "layer_norm_rows: beta shape " + shape_str(beta.shape()) + " for input " +
              shape_str(t.shape()));
  const auto& v = t.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  std::vector<double> out(v.size());
  std::vector<double> inv_std(r), mean(r);
  for (int i = 0; i < r; ++i) {
    const double* row = &v[static_cast<std::size_t>(i) * c];
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = inv;
    double* orow = &out[static_cast<std::size_t>(i) * c];
    for (int j = 0; j < c; ++j) orow[j] = (row[j] - mu) * inv * gv[j] + bv[j];
  }
  return make_op("layer_norm_rows", t.shape(), std::move(out), {t, gamma, beta},
                 [t, gamma, beta, r, c, mean, inv_std](Node& self) {
                   const auto& xv = t.data();
                   const auto& gv2 = gamma.data();
                   for (int i = 0; i < r; ++i) {
                     const double* x = &xv[static_cast<std::size_t>(i) * c];
                     const double* dy = &self.grad[static_cast<std::size_t>(i) * c];
                     double inv = inv_std[i], mu = mean[i];
                     // xhat and gamma-scaled grads
                     double mean_dg = 0.0, mean_dg_xhat = 0.0;
                     for (int j = 0; j < c; ++j) {
                       double xhat = (x[j] - mu) * inv;
                       double dg = dy[j] * gv2[j];
                       mean_dg += dg;
                       mean_dg_xhat += dg * xhat;
                     }
                     mean_dg /= c;
                     mean_dg_xhat /= c;
                     if (t.needs_grad()) {
                       auto& g = grad_buf(*t.node);
                       double* grow = &g[static_cast<std::size_t>(i) * c];
                       for (int j = 0; j < c; ++j) {
                         double xhat = (x[j] - mu) * inv;
                         double dg = dy[j] * gv2[j];
                         grow[j] += inv * (dg - mean_dg - xhat * mean_dg_xhat);
                       }
                     }
                     if (gamma.needs_grad()) {
                       auto& g = grad_buf(*gamma.node);
                       for (int j = 0; j < c; ++j) g[j] += dy[j] * (x[j] - mu) * inv;
                     }
                     if (beta.needs_grad()) {
                       auto& g = grad_buf(*beta.node);
                       for (int j = 0; j < c; ++j) g[j] += dy[j];
                     }
                   }
                 });
}

// ------------------------------------------------------------- convolution

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require(x.defined() && x.shape().size() == 3,
          "conv2d: input must be (C,H,W), got " + shape_str(x.shape()));
  require(w.defined() && w.shape().size() == 4,
          "conv2d: weight must be (O,C,kh,kw), got " + shape_str(w.shape()));
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == C, "conv2d: channel mismatch " + s2(x, w));
  require(bias.defined() && bias.shape() == Shape{O},
          "conv2d: bias shape " + shape_str(bias.shape()) + " for weight " + shape_str(w.shape()));
  require(stride > 0 && pad >= 0, "conv2d: bad stride/pad");
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: kernel " + shape_str(w.shape()) + " too large for input " +
                                shape_str(x.shape()));
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = bias.data();
  std::vector<double> out(static_cast<std::size_t>(O) * Ho * Wo);
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        double acc = bv[o];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < kh; ++u) {
            int yy = i * stride + u - pad;
            if (yy < 0 || yy >= H) continue;
            const double* xrow = &xv[(static_cast<std::size_t>(c) * H + yy) * W];
            const double* wrow = &wv[((static_cast<std::size_t>(o) * C + c) * kh + u) * kw];
            for (int v = 0; v < kw; ++v) {
              int xx = j * stride + v - pad;
              if (xx < 0 || xx >= W) continue;
              acc += xrow[xx] * wrow[v];
            }
          }
        out[(static_cast<std::size_t>(o) * Ho + i) * Wo + j] = acc;
      }
  return make_op("conv2d", {O, Ho, Wo}, std::move(out), {x, w, bias},
                 [x, w, bias, stride, pad, C, H, W, O, kh, kw, Ho, Wo](Node& self) {
                   const auto& xv2 = x.data();
                   const auto& wv2 = w.data();
                   bool gx = x.needs_grad(), gw = w.needs_grad(), gb = bias.needs_grad();
                   std::vector<double>* xg = gx ? &grad_buf(*x.node) : nullptr;
                   std::vector<double>* wg = gw ? &grad_buf(*w.node) : nullptr;
                   std::vector<double>* bg = gb ? &grad_buf(*bias.node) : nullptr;
                   for (int o = 0; o < O; ++o)
                     for (int i = 0; i < Ho; ++i)
                       for (int j = 0; j < Wo; ++j) {
                         double g = self.grad[(static_cast<std::size_t>(o) * Ho + i) * Wo + j];
                         if (g == 0.0) continue;
                         if (bg) (*bg)[o] += g;
                         for (int c = 0; c < C; ++c)
                           for (int u = 0; u < kh; ++u) {
                             int yy = i * stride + u - pad;
                             if (yy < 0 || yy >= H) continue;
                             for (int v = 0; v < kw; ++v) {
                               int xx = j * stride + v - pad;
                               if (xx < 0 || xx >= W) continue;
                               std::size_t xi = (static_cast<std::size_t>(c) * H + yy) * W + xx;
                               std::size_t wi = ((static_cast<std::size_t>(o) * C + c) * kh + u) * kw + v;
                               if (wg) (*wg)[wi] += g * xv2[xi];
                               if (xg) (*xg)[xi] += g * wv2[wi];
                             }
                           }
                       }
                 });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
  require(x.defined() && x.shape().size() == 3,
          "conv_transpose2d: input must be (C,H,W), got " + shape_str(x.shape()));
  require(w.defined() && w.shape().size() == 4,
          "conv_transpose2d: weight must be (C,O,kh,kw), got " + shape_str(w.shape()));
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  int O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(0) == C, "conv_transpose2d: channel mismatch " + s2(x, w));
  require(bias.defined() && bias.shape() == Shape{O},
          "conv_transpose2d: bias shape " + shape_str(bias.shape()) + " for weight " +
              shape_str(w.shape()));
  require(stride > 0, "conv_transpose2d: bad stride");
  int Ho = (H - 1) * stride + kh;
  int Wo = (W - 1) * stride + kw;
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = bias.data();
  std::vector<double> out(static_cast<std::size_t>(O) * Ho * Wo, 0.0);
  for (int o = 0; o < O; ++o) {
    double b = bv[o];
    double* plane = &out[static_cast<std::size_t>(o) * Ho * Wo];
    for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) plane[i] = b;
  }
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int ww = 0; ww < W; ++ww) {
        double xval = xv[(static_cast<std::size_t>(c) * H + h) * W + ww];
        if (xval == 0.0) continue;
        for (int o = 0; o < O; ++o)
          for (int u = 0; u < kh; ++u) {
            double* orow = &out[(static_cast<std::size_t>(o) * Ho + h * stride + u) * Wo + ww * stride];
            const double* wrow = &wv[((static_cast<std::size_t>(c) * O + o) * kh + u) * kw];
            for (int v = 0; v < kw; ++v) orow[v] += xval * wrow[v];
          }
      }
  return make_op("conv_transpose2d", {O, Ho, Wo}, std::move(out), {x, w, bias},
                 [x, w, bias, stride, C, H, W, O, kh, kw, Ho, Wo](Node& self) {
                   const auto& xv2 = x.data();
                   const auto& wv2 = w.data();
                   bool gx = x.needs_grad(), gw = w.needs_grad(), gb = bias.needs_grad();
                   std::vector<double>* xg = gx ? &grad_buf(*x.node) : nullptr;
                   std::vector<double>* wg = gw ? &grad_buf(*w.node) : nullptr;
                   std::vector<double>* bg = gb ? &grad_buf(*bias.node) : nullptr;
                   if (bg) {
                     for (int o = 0; o < O; ++o) {
                       const double* plane = &self.grad[static_cast<std::size_t>(o) * Ho * Wo];
                       double acc = 0.0;
                       for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) acc += plane[i];
                       (*bg)[o] += acc;
                     }
                   }
                   if (!xg && !wg) return;
                   for (int c = 0; c < C; ++c)
                     for (int h = 0; h < H; ++h)
                       for (int ww2 = 0; ww2 < W; ++ww2) {
                         std::size_t xi = (static_cast<std::size_t>(c) * H + h) * W + ww2;
                         double xval = xv2[xi];
                         double xacc = 0.0;
                         for (int o = 0; o < O; ++o)
                           for (int u = 0; u < kh; ++u) {
                             const double* grow =
                                 &self.grad[(static_cast<std::size_t>(o) * Ho + h * stride + u) * Wo +
                                            ww2 * stride];
                             std::size_t wbase = ((static_cast<std::size_t>(c) * O + o) * kh + u) * kw;
                             for (int v = 0; v < kw; ++v) {
                               if (xg) xacc += grow[v] * wv2[wbase + v];
                               if (wg) (*wg)[wbase + v] += grow[v] * xval;
                             }
                           }
                         if (xg) (*xg)[xi] += xacc;
                       }
                 });
}

// ------------------------------------------------------------------ gather

Tensor embedding_rows(const Tensor& table, const std::vector<int>& idx) {
  require_2d(table, "embedding_rows");
  int rows = table.dim(0), d = table.dim(1);
  for (int i : idx)
    require(i >= 0 && i < rows, "embedding_rows: index " + std::to_string(i) + " out of " +
                                    shape_str(table.shape()));
  const auto& tv = table.data();
  std::vector<double> out(idx.size() * static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < d; ++j)
      out[r * d + j] = tv[static_cast<std::size_t>(idx[r]) * d + j];
  return make_op("embedding_rows", {static_cast<int>(idx.size()), d}, std::move(out), {table},
                 [table, idx, d](Node& self) {
                   if (!table.needs_grad()) return;
                   auto& g = grad_buf(*table.node);
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (int j = 0; j < d; ++j)
                       g[static_cast<std::size_t>(idx[r]) * d + j] += self.grad[r * d + j];
                 });
}

Tensor gather_rows_or_zero(const Tensor& tokens, const std::vector<int>& idx) {
  require_2d(tokens, "gather_rows_or_zero");
  int rows = tokens.dim(0), d = tokens.dim(1);
  for (int i : idx)
    require(i >= -1 && i < rows, "gather_rows_or_zero: index " + std::to_string(i) + " out of " +
                                     shape_str(tokens.shape()));
  const auto& tv = tokens.data();
  std::vector<double> out(idx.size() * static_cast<std::size_t>(d), 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    for (int j = 0; j < d; ++j)
      out[r * d + j] = tv[static_cast<std::size_t>(idx[r]) * d + j];
  }
  return make_op("gather_rows_or_zero", {static_cast<int>(idx.size()), d}, std::move(out),
                 {tokens}, [tokens, idx, d](Node& self) {
                   if (!tokens.needs_grad()) return;
                   auto& g = grad_buf(*tokens.node);
                   for (std::size_t r = 0; r < idx.size(); ++r) {
                     if (idx[r] < 0) continue;
                     for (int j = 0; j < d; ++j)
                       g[static_cast<std::size_t>(idx[r]) * d + j] += self.grad[r * d + j];
                   }
                 });
}

Tensor im2patches(const Tensor& x, int p) {
  require(x.shape().size() == 3, "im2patches: expects (C,H,W), got " + shape_str(x.shape()));
  require(p >= 1, "im2patches: patch size must be positive");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h % p == 0 && w % p == 0,
          "im2patches: patch " + std::to_string(p) + " does not divide " + shape_str(x.shape()));
  int gh = h / p, gw = w / p;
  int n = gh * gw, d = c * p * p;
  const auto& xv = x.data();
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  auto src_index = [h, w, p](int ch, int pr, int pc, int i, int j) {
    return (static_cast<std::size_t>(ch) * h + (pr * p + i)) * w + (pc * p + j);
  };
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc) {
      std::size_t row = static_cast<std::size_t>(pr * gw + pc) * d;
      std::size_t k = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) out[row + k++] = xv[src_index(ch, pr, pc, i, j)];
    }
  return make_op("im2patches", {n, d}, std::move(out), {x},
                 [x, c, p, gh, gw, d, src_index](Node& self) {
                   if (!x.needs_grad()) return;
                   auto& g = grad_buf(*x.node);
                   for (int pr = 0; pr < gh; ++pr)
                     for (int pc = 0; pc < gw; ++pc) {
                       std::size_t row = static_cast<std::size_t>(pr * gw + pc) * d;
                       std::size_t k = 0;
                       for (int ch = 0; ch < c; ++ch)
                         for (int i = 0; i < p; ++i)
                           for (int j = 0; j < p; ++j)
                             g[src_index(ch, pr, pc, i, j)] += self.grad[row + k++];
                     }
                 });
}

// --------------------------------------------------------------- recurrent

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruWeights& w) {
  require_2d(x, "gru_cell");
  require_2d(h, "gru_cell");
  require(x.dim(0) == 1 && h.dim(0) == 1, "gru_cell: expects row vectors, got " + s2(x, h));
  Tensor z = sigmoid(add_rows(add(matmul(x, w.wz), matmul(h, w.uz)), w.bz));
  Tensor r = sigmoid(add_rows(add(matmul(x, w.wr), matmul(h, w.ur)), w.br));
  Tensor cand = tanh_act(add_rows(add(matmul(x, w.wh), matmul(mul(r, h), w.uh)), w.bh));
  Tensor keep = add_scalar(scale(z, -1.0), 1.0);  // 1 - z
  return add(mul(keep, h), mul(z, cand));
}

// ------------------------------------------------------- reductions/losses

Tensor sum_all(const Tensor& t) {
  require(t.defined(), "sum_all: undefined input");
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return make_op("sum_all", {1}, {acc}, {t}, [t](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean_all(const Tensor& t) {
  require(t.defined(), "mean_all: undefined input");
  double n = static_cast<double>(t.size());
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return make_op("mean_all", {1}, {acc / n}, {t}, [t, n](Node& self) {
    if (!t.needs_grad()) return;
    auto& g = grad_buf(*t.node);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] / n;
  });
}

Tensor l1_loss_sum(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss_sum");
  const auto& pv = pred.data();
  const auto& tv = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += std::abs(pv[i] - tv[i]);
  return make_op("l1_loss_sum", {1}, {acc}, {pred}, [pred, target](Node& self) {
    if (!pred.needs_grad()) return;
    auto& g = grad_buf(*pred.node);
    const auto& pv2 = pred.data();
    const auto& tv2 = target.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = pv2[i] - tv2[i];
      g[i] += self.grad[0] * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
    }
  });
}

Tensor mse_loss_mean(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss_mean");
  const auto& pv = pred.data();
  const auto& tv = target.data();
  double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  return make_op("mse_loss_mean", {1}, {acc / n}, {pred}, [pred, target, n](Node& self) {
    if (!pred.needs_grad()) return;
    auto& g = grad_buf(*pred.node);
    const auto& pv2 = pred.data();
    const auto& tv2 = target.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[0] * 2.0 * (pv2[i] - tv2[i]) / n;
  });
}

Tensor bce_loss_mean(const Tensor& prob, const Tensor& target) {
  require_same_shape(prob, target, "bce_loss_mean");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const auto& pv = prob.data();
  const auto& tv = target.data();
  double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double p = clamp(pv[i], lo, hi);
    acc += -(tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p));
  }
  return make_op("bce_loss_mean", {1}, {acc / n}, {prob}, [prob, target, n](Node& self) {
    if (!prob.needs_grad()) return;
    auto& g = grad_buf(*prob.node);
    const auto& pv2 = prob.data();
    const auto& tv2 = target.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double p = pv2[i];
      if (p <= lo || p >= hi) continue;  // clamped region: flat
      g[i] += self.grad[0] * (p - tv2[i]) / (p * (1.0 - p)) / n;
    }
  });
}

}  // namespace hgd
