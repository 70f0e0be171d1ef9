#include "poseforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "poseforge/errors.hpp"
#include "poseforge/kernels.hpp"

namespace poseforge::ag {

using detail::make_result;
namespace kp = kernels::parallel;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": rank-0 input");
  return x.shape().back();
}

template <class F>
Tensor unary(const Tensor& x, const char* op, F&& f, auto&& df) {
  std::vector<double> y(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(x.shape(), std::move(y), op, {x},
                     [df](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       const Node& in = *self.inputs[0];
                       auto gx = buf.of(in);
                       if (gx.empty()) return;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] += g[i] * df(in.value[i], self.value[i]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(y), "add", {a, b},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       for (const auto& in : self.inputs) {
                         auto gi = buf.of(*in);
                         for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(y), "sub", {a, b},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto ga = buf.of(*self.inputs[0]);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                       auto gb = buf.of(*self.inputs[1]);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(y), "mul", {a, b},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       const Node& na = *self.inputs[0];
                       const Node& nb = *self.inputs[1];
                       auto ga = buf.of(na);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * nb.value[i];
                       auto gb = buf.of(nb);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * na.value[i];
                     });
}

Tensor scale(const Tensor& x, double c) {
  return unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_constant(const Tensor& x, double c) {
  return unary(x, "add_constant", [c](double v) { return v + c; },
               [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: gain must hold one value, got " + shape_str(s.shape()));
  const double sv = s[0];
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * sv;
  return make_result(x.shape(), std::move(y), "mul_scalar", {x, s},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       const Node& nx = *self.inputs[0];
                       const Node& ns = *self.inputs[1];
                       auto gx = buf.of(nx);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * ns.value[0];
                       auto gs = buf.of(ns);
                       if (!gs.empty()) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * nx.value[i];
                         gs[0] += acc;
                       }
                     });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const std::size_t n = last_dim(x, "add_bias");
  if (b.rank() != 1 || b.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i % n];
  return make_result(x.shape(), std::move(y), "add_bias", {x, b},
                     [n](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                       auto gb = buf.of(*self.inputs[1]);
                       if (!gb.empty()) {
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                       }
                     });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, "leaky_relu", [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, "sqrt", [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor smooth_l1(const Tensor& x) {
  return unary(
      x, "smooth_l1",
      [](double v) { return std::abs(v) < 1.0 ? 0.5 * v * v : std::abs(v) - 0.5; },
      [](double v, double) { return std::abs(v) < 1.0 ? v : (v > 0 ? 1.0 : -1.0); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result({}, {acc}, "sum", {x},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       for (double& v : gx) v += g[0];
                     });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor weighted_sum(const Tensor& x, std::span<const double> w) {
  if (w.size() != x.size()) throw DimensionError("weighted_sum: weight count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += x[i] * w[i];
  std::vector<double> weights(w.begin(), w.end());
  return make_result({}, {acc}, "weighted_sum", {x},
                     [weights = std::move(weights)](const Node& self, std::span<const double> g,
                                                    GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(y), "reshape", {x},
                     [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw DimensionError("concat axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != out_shape[i]) {
        throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " +
                             shape_str(out_shape));
      }
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  out_shape[axis] = total;
  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<double> y(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].values();
    const std::size_t chunk = lens[k] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk, y.data() + o * total * sp.inner + offset * sp.inner);
    }
    offset += lens[k];
  }
  return make_result(std::move(out_shape), std::move(y), "concat", parts,
                     [sp, lens, total](const Node& self, std::span<const double> g,
                                       GradBuffers& buf) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto gi = buf.of(*self.inputs[k]);
                         const std::size_t chunk = lens[k] * sp.inner;
                         if (!gi.empty()) {
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             const double* src = g.data() + o * total * sp.inner + off * sp.inner;
                             double* dst = gi.data() + o * chunk;
                             for (std::size_t t = 0; t < chunk; ++t) dst[t] += src[t];
                           }
                         }
                         off += lens[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (begin > end || end > sp.len) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * sp.inner;
  std::vector<double> y(sp.outer * chunk);
  const auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.data() + o * sp.len * sp.inner + begin * sp.inner, chunk, y.data() + o * chunk);
  }
  return make_result(std::move(out_shape), std::move(y), "slice", {x},
                     [sp, begin, chunk](const Node& self, std::span<const double> g,
                                        GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       if (gx.empty()) return;
                       for (std::size_t o = 0; o < sp.outer; ++o) {
                         double* dst = gx.data() + o * sp.len * sp.inner + begin * sp.inner;
                         const double* src = g.data() + o * chunk;
                         for (std::size_t t = 0; t < chunk; ++t) dst[t] += src[t];
                       }
                     });
}

Tensor transpose01(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose01 needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1);
  const std::size_t inner = x.size() / std::max<std::size_t>(a * b, 1);
  Shape out_shape = x.shape();
  std::swap(out_shape[0], out_shape[1]);
  std::vector<double> y(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(xv.data() + (i * b + j) * inner, inner, y.data() + (j * a + i) * inner);
  return make_result(std::move(out_shape), std::move(y), "transpose01", {x},
                     [a, b, inner](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       if (gx.empty()) return;
                       for (std::size_t i = 0; i < a; ++i)
                         for (std::size_t j = 0; j < b; ++j)
                           for (std::size_t c = 0; c < inner; ++c)
                             gx[(i * b + j) * inner + c] += g[(j * a + i) * inner + c];
                     });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("matmul: weight must be rank 2, got " + shape_str(w.shape()));
  const std::size_t in = last_dim(x, "matmul");
  if (w.dim(0) != in) {
    throw DimensionError("matmul: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t out = w.dim(1);
  const std::size_t rows = x.size() / std::max<std::size_t>(in, 1);
  Shape out_shape = x.shape();
  out_shape.back() = out;
  std::vector<double> y(rows * out, 0.0);
  kp::gemm_nn(x.values(), w.values(), y, rows, in, out);
  return make_result(std::move(out_shape), std::move(y), "matmul", {x, w},
                     [rows, in, out](const Node& self, std::span<const double> g,
                                     GradBuffers& buf) {
                       const Node& nx = *self.inputs[0];
                       const Node& nw = *self.inputs[1];
                       auto gx = buf.of(nx);
                       if (!gx.empty()) kp::gemm_nt(g, nw.value, gx, rows, in, out);
                       auto gw = buf.of(nw);
                       if (!gw.empty()) kp::gemm_tn(nx.value, g, gw, rows, in, out);
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t width = last_dim(x, "layer_norm");
  if (width == 0) throw DimensionError("layer_norm over an empty axis");
  if (eps <= 0) throw ContractError("layer_norm eps must be positive");
  if (gamma.size() != width || beta.size() != width) {
    throw DimensionError("layer_norm: affine parameters " + shape_str(gamma.shape()) +
                         " do not match width " + std::to_string(width));
  }
  const std::size_t rows = x.size() / width;
  std::vector<double> xhat(x.size()), inv_std(rows);
  kp::layer_norm(x.values(), xhat, inv_std, rows, width, eps);
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c)
      y[r * width + c] = gamma[c] * xhat[r * width + c] + beta[c];
  return make_result(
      x.shape(), std::move(y), "layer_norm", {x, gamma, beta},
      [rows, width, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Node& self, std::span<const double> g, GradBuffers& buf) {
        const Node& ng = *self.inputs[1];
        auto gg = buf.of(ng);
        auto gb = buf.of(*self.inputs[2]);
        auto gx = buf.of(*self.inputs[0]);
        std::vector<double> dxhat(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * width;
          const double* xr = xhat.data() + r * width;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < width; ++c) {
            if (!gg.empty()) gg[c] += gr[c] * xr[c];
            if (!gb.empty()) gb[c] += gr[c];
            dxhat[c] = gr[c] * ng.value[c];
            s1 += dxhat[c];
            s2 += dxhat[c] * xr[c];
          }
          if (gx.empty()) continue;
          const double k = inv_std[r] / static_cast<double>(width);
          for (std::size_t c = 0; c < width; ++c) {
            gx[r * width + c] += k * (static_cast<double>(width) * dxhat[c] - s1 - xr[c] * s2);
          }
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (sp.len == 0) throw DimensionError("softmax over an empty axis");
  std::vector<double> y(x.size());
  kp::softmax(x.values(), y, sp.outer, sp.len, sp.inner);
  return make_result(x.shape(), std::move(y), "softmax", {x},
                     [sp](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto gx = buf.of(*self.inputs[0]);
                       if (gx.empty()) return;
                       const auto& y = self.value;
                       for (std::size_t o = 0; o < sp.outer; ++o) {
                         for (std::size_t in = 0; in < sp.inner; ++in) {
                           const std::size_t base = o * sp.len * sp.inner + in;
                           double dot = 0.0;
                           for (std::size_t t = 0; t < sp.len; ++t) {
                             dot += g[base + t * sp.inner] * y[base + t * sp.inner];
                           }
                           for (std::size_t t = 0; t < sp.len; ++t) {
                             const std::size_t i = base + t * sp.inner;
                             gx[i] += y[i] * (g[i] - dot);
                           }
                         }
                       }
                     });
}

Tensor pair_logits(const Tensor& q, const Tensor& k, std::size_t heads, double scale) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw DimensionError("pair_logits: Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()) + " must be [n, d] with equal d");
  }
  if (heads == 0 || q.dim(1) % heads != 0) {
    throw DimensionError("pair_logits: width " + std::to_string(q.dim(1)) +
                         " not divisible by head count " + std::to_string(heads));
  }
  const std::size_t rows = q.dim(0), cols = k.dim(0), width = q.dim(1) / heads;
  std::vector<double> y(rows * cols * heads);
  kp::pair_logits(q.values(), k.values(), y, rows, cols, heads, width, scale);
  return make_result(
      {rows, cols, heads}, std::move(y), "pair_logits", {q, k},
      [rows, cols, heads, width, scale](const Node& self, std::span<const double> g,
                                        GradBuffers& buf) {
        const Node& nq = *self.inputs[0];
        const Node& nk = *self.inputs[1];
        const std::size_t stride = heads * width;
        auto gq = buf.of(nq);
        if (!gq.empty()) {
          std::vector<double> tmp(rows * stride);
          kp::attend(g, nk.value, tmp, rows, cols, heads, width);
          for (std::size_t i = 0; i < tmp.size(); ++i) gq[i] += scale * tmp[i];
        }
        auto gk = buf.of(nk);
        if (!gk.empty()) {
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
              for (std::size_t h = 0; h < heads; ++h) {
                const double w = scale * g[(i * cols + j) * heads + h];
                if (w == 0.0) continue;
                const double* qi = nq.value.data() + i * stride + h * width;
                double* kj = gk.data() + j * stride + h * width;
                for (std::size_t c = 0; c < width; ++c) kj[c] += w * qi[c];
              }
        }
      });
}

Tensor attend(const Tensor& p, const Tensor& v) {
  if (p.rank() != 3 || v.rank() != 2 || p.dim(1) != v.dim(0) || p.dim(2) == 0 ||
      v.dim(1) % p.dim(2) != 0) {
    throw DimensionError("attend: weights " + shape_str(p.shape()) + " incompatible with values " +
                         shape_str(v.shape()));
  }
  const std::size_t rows = p.dim(0), cols = p.dim(1), heads = p.dim(2), width = v.dim(1) / heads;
  std::vector<double> y(rows * heads * width);
  kp::attend(p.values(), v.values(), y, rows, cols, heads, width);
  return make_result(
      {rows, heads * width}, std::move(y), "attend", {p, v},
      [rows, cols, heads, width](const Node& self, std::span<const double> g, GradBuffers& buf) {
        const Node& np = *self.inputs[0];
        const Node& nv = *self.inputs[1];
        const std::size_t stride = heads * width;
        auto gp = buf.of(np);
        if (!gp.empty()) {
          std::vector<double> tmp(rows * cols * heads);
          kp::pair_logits(g, nv.value, tmp, rows, cols, heads, width, 1.0);
          for (std::size_t i = 0; i < tmp.size(); ++i) gp[i] += tmp[i];
        }
        auto gv = buf.of(nv);
        if (!gv.empty()) {
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
              for (std::size_t h = 0; h < heads; ++h) {
                const double w = np.value[(i * cols + j) * heads + h];
                const double* gi = g.data() + i * stride + h * width;
                double* vj = gv.data() + j * stride + h * width;
                for (std::size_t c = 0; c < width; ++c) vj[c] += w * gi[c];
              }
        }
      });
}

Tensor block_diag_pairs(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != a.dim(1) || b.dim(0) != b.dim(1) ||
      a.dim(2) != b.dim(2)) {
    throw DimensionError("block_diag_pairs: blocks " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " must be square with equal channels");
  }
  const std::size_t n = a.dim(0), m = b.dim(0), c = a.dim(2), t = n + m;
  std::vector<double> y(t * t * c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.values().data() + i * n * c, n * c, y.data() + i * t * c);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(b.values().data() + i * m * c, m * c, y.data() + ((n + i) * t + n) * c);
  return make_result({t, t, c}, std::move(y), "block_diag_pairs", {a, b},
                     [n, m, c, t](const Node& self, std::span<const double> g, GradBuffers& buf) {
                       auto ga = buf.of(*self.inputs[0]);
                       if (!ga.empty())
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t k = 0; k < n * c; ++k) ga[i * n * c + k] += g[i * t * c + k];
                       auto gb = buf.of(*self.inputs[1]);
                       if (!gb.empty())
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t k = 0; k < m * c; ++k)
                             gb[i * m * c + k] += g[((n + i) * t + n) * c + k];
                     });
}

Tensor pair_concat(const Tensor& a, const Tensor& b, const Tensor& p) {
  if (a.rank() != 2 || b.rank() != 2 || p.rank() != 3 || p.dim(0) != a.dim(0) ||
      p.dim(1) != b.dim(0)) {
    throw DimensionError("pair_concat: rows " + shape_str(a.shape()) + ", cols " +
                         shape_str(b.shape()) + ", pairs " + shape_str(p.shape()));
  }
  const std::size_t n = a.dim(0), m = b.dim(0), da = a.dim(1), db = b.dim(1), c = p.dim(2);
  const std::size_t w = da + db + c;
  std::vector<double> y(n * m * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double* dst = y.data() + (i * m + j) * w;
      std::copy_n(a.values().data() + i * da, da, dst);
      std::copy_n(b.values().data() + j * db, db, dst + da);
      std::copy_n(p.values().data() + (i * m + j) * c, c, dst + da + db);
    }
  return make_result({n, m, w}, std::move(y), "pair_concat", {a, b, p},
                     [n, m, da, db, c, w](const Node& self, std::span<const double> g,
                                          GradBuffers& buf) {
                       auto ga = buf.of(*self.inputs[0]);
                       auto gb = buf.of(*self.inputs[1]);
                       auto gp = buf.of(*self.inputs[2]);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j) {
                           const double* src = g.data() + (i * m + j) * w;
                           if (!ga.empty())
                             for (std::size_t k = 0; k < da; ++k) ga[i * da + k] += src[k];
                           if (!gb.empty())
                             for (std::size_t k = 0; k < db; ++k) gb[j * db + k] += src[da + k];
                           if (!gp.empty())
                             for (std::size_t k = 0; k < c; ++k)
                               gp[(i * m + j) * c + k] += src[da + db + k];
                         }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> index, Shape prefix) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2");
  if (numel(prefix) != index.size()) throw DimensionError("embedding: index count mismatch");
  const std::size_t rows = table.dim(0), w = table.dim(1);
  std::vector<double> y(index.size() * w);
  for (std::size_t p = 0; p < index.size(); ++p) {
    const auto r = static_cast<std::size_t>(index[p]);
    if (index[p] < 0 || r >= rows) throw DimensionError("embedding index out of range");
    std::copy_n(table.values().data() + r * w, w, y.data() + p * w);
  }
  prefix.push_back(w);
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(prefix), std::move(y), "embedding", {table},
                     [w, idx = std::move(idx)](const Node& self, std::span<const double> g,
                                               GradBuffers& buf) {
                       auto gt = buf.of(*self.inputs[0]);
                       if (gt.empty()) return;
                       for (std::size_t p = 0; p < idx.size(); ++p)
                         for (std::size_t c = 0; c < w; ++c)
                           gt[static_cast<std::size_t>(idx[p]) * w + c] += g[p * w + c];
                     });
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> target,
                         std::span<const char> mask) {
  const std::size_t classes = last_dim(logits, "cross_entropy_sum");
  const std::size_t rows = logits.size() / classes;
  if (target.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy_sum: " + std::to_string(rows) + " rows but " +
                         std::to_string(target.size()) + " targets");
  }
  std::vector<double> prob(logits.size());
  kp::softmax(logits.values(), prob, rows, classes, 1);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const auto t = static_cast<std::size_t>(target[r]);
    if (target[r] < 0 || t >= classes) throw DimensionError("cross_entropy_sum: target out of range");
    // log-softmax via max shift for accuracy with peaked logits
    const double* z = logits.values().data() + r * classes;
    const double mx = *std::max_element(z, z + classes);
    double se = 0.0;
    for (std::size_t c = 0; c < classes; ++c) se += std::exp(z[c] - mx);
    total += -(z[t] - mx - std::log(se));
  }
  std::vector<int> tg(target.begin(), target.end());
  std::vector<char> mk(mask.begin(), mask.end());
  return make_result({}, {total}, "cross_entropy_sum", {logits},
                     [classes, rows, prob = std::move(prob), tg = std::move(tg),
                      mk = std::move(mk)](const Node& self, std::span<const double> g,
                                          GradBuffers& buf) {
                       auto gz = buf.of(*self.inputs[0]);
                       if (gz.empty()) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (!mk[r]) continue;
                         for (std::size_t c = 0; c < classes; ++c) {
                           const double onehot = static_cast<int>(c) == tg[r] ? 1.0 : 0.0;
                           gz[r * classes + c] += g[0] * (prob[r * classes + c] - onehot);
                         }
                       }
                     });
}

double gaussian_kernel(double x, double mu, double sigma, bool verbatim) {
  constexpr double pi = std::numbers::pi;
  const double diff = x - mu;
  if (verbatim) {
    return std::exp(-diff * diff / (2.0 * pi * sigma * sigma)) / std::sqrt(2.0 * pi * sigma);
  }
  return std::exp(-diff * diff / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * pi));
}

Tensor gaussian_kernels(std::span<const double> dist, std::span<const int> type_index,
                        std::size_t rows, std::size_t cols, const Tensor& u, const Tensor& v,
                        const GaussianSpec& spec) {
  const std::size_t pairs = rows * cols, kk = spec.mu.size();
  if (dist.size() != pairs || type_index.size() != pairs || spec.sigma.size() != kk) {
    throw DimensionError("gaussian_kernels: inconsistent pair or kernel counts");
  }
  if (u.size() != v.size()) throw DimensionError("gaussian_kernels: u/v table size mismatch");
  std::vector<double> y(pairs * kk);
  std::vector<double> dhat(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto t = static_cast<std::size_t>(type_index[p]);
    if (type_index[p] < 0 || t >= u.size()) throw DimensionError("gaussian_kernels: type index out of range");
    dhat[p] = u[t] * dist[p] + v[t];
    for (std::size_t k = 0; k < kk; ++k) {
      y[p * kk + k] = gaussian_kernel(dhat[p], spec.mu[k], spec.sigma[k], spec.verbatim);
    }
  }
  std::vector<double> d(dist.begin(), dist.end());
  std::vector<int> ti(type_index.begin(), type_index.end());
  return make_result(
      {rows, cols, kk}, std::move(y), "gaussian_kernels", {u, v},
      [pairs, kk, spec, d = std::move(d), ti = std::move(ti), dhat = std::move(dhat)](
          const Node& self, std::span<const double> g, GradBuffers& buf) {
        auto gu = buf.of(*self.inputs[0]);
        auto gv = buf.of(*self.inputs[1]);
        const double c = spec.verbatim ? std::numbers::pi : 1.0;
        for (std::size_t p = 0; p < pairs; ++p) {
          double dk = 0.0;
          for (std::size_t k = 0; k < kk; ++k) {
            const double s = spec.sigma[k];
            dk += g[p * kk + k] * self.value[p * kk + k] * (-(dhat[p] - spec.mu[k]) / (c * s * s));
          }
          const auto t = static_cast<std::size_t>(ti[p]);
          if (!gu.empty()) gu[t] += dk * d[p];
          if (!gv.empty()) gv[t] += dk;
        }
      });
}

Tensor coordinate_update(const Tensor& p, std::span<const double> anchors, const Tensor& a_intra,
                         const Tensor& a_inter, double eps) {
  if (p.rank() != 2 || p.dim(1) != 3) throw DimensionError("coordinate_update: P must be [n,3]");
  const std::size_t n = p.dim(0), m = anchors.size() / 3;
  if (anchors.size() != m * 3) throw DimensionError("coordinate_update: anchors must be [m,3]");
  if (a_intra.shape() != Shape{n, n} || a_inter.shape() != Shape{n, m}) {
    throw DimensionError("coordinate_update: score shapes " + shape_str(a_intra.shape()) + ", " +
                         shape_str(a_inter.shape()) + " do not match n=" + std::to_string(n) +
                         ", m=" + std::to_string(m));
  }
  const auto pv = p.values();
  std::vector<double> y(pv.begin(), pv.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double diff[3];
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        diff[c] = pv[i * 3 + c] - pv[j * 3 + c];
        r2 += diff[c] * diff[c];
      }
      const double r = std::sqrt(r2);
      if (r < eps) continue;
      const double w = a_intra[i * n + j] / r;
      for (int c = 0; c < 3; ++c) y[i * 3 + c] += w * diff[c];
    }
    for (std::size_t k = 0; k < m; ++k) {
      double diff[3];
      double r2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        diff[c] = pv[i * 3 + c] - anchors[k * 3 + c];
        r2 += diff[c] * diff[c];
      }
      const double r = std::sqrt(r2);
      if (r < eps) continue;
      const double w = a_inter[i * m + k] / r;
      for (int c = 0; c < 3; ++c) y[i * 3 + c] += w * diff[c];
    }
  }
  std::vector<double> anc(anchors.begin(), anchors.end());
  return make_result(
      {n, 3}, std::move(y), "coordinate_update", {p, a_intra, a_inter},
      [n, m, eps, anc = std::move(anc)](const Node& self, std::span<const double> g,
                                        GradBuffers& buf) {
        const Node& np = *self.inputs[0];
        const Node& na = *self.inputs[1];
        const Node& nb = *self.inputs[2];
        auto gp = buf.of(np);
        auto ga = buf.of(na);
        auto gb = buf.of(nb);
        const auto& pv = np.value;
        if (!gp.empty())
          for (std::size_t i = 0; i < n * 3; ++i) gp[i] += g[i];
        // d u / d P_i = (I - u u^T) / r
        auto project = [](const double* gi, const double* u, double r, double out[3]) {
          const double dot = gi[0] * u[0] + gi[1] * u[1] + gi[2] * u[2];
          for (int c = 0; c < 3; ++c) out[c] = (gi[c] - dot * u[c]) / r;
        };
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g.data() + i * 3;
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double u[3], r2 = 0.0;
            for (int c = 0; c < 3; ++c) {
              u[c] = pv[i * 3 + c] - pv[j * 3 + c];
              r2 += u[c] * u[c];
            }
            const double r = std::sqrt(r2);
            if (r < eps) continue;
            for (int c = 0; c < 3; ++c) u[c] /= r;
            if (!ga.empty()) ga[i * n + j] += gi[0] * u[0] + gi[1] * u[1] + gi[2] * u[2];
            if (!gp.empty()) {
              double proj[3];
              project(gi, u, r, proj);
              const double a = na.value[i * n + j];
              for (int c = 0; c < 3; ++c) {
                gp[i * 3 + c] += a * proj[c];
                gp[j * 3 + c] -= a * proj[c];
              }
            }
          }
          for (std::size_t k = 0; k < m; ++k) {
            double u[3], r2 = 0.0;
            for (int c = 0; c < 3; ++c) {
              u[c] = pv[i * 3 + c] - anc[k * 3 + c];
              r2 += u[c] * u[c];
            }
            const double r = std::sqrt(r2);
            if (r < eps) continue;
            for (int c = 0; c < 3; ++c) u[c] /= r;
            if (!gb.empty()) gb[i * m + k] += gi[0] * u[0] + gi[1] * u[1] + gi[2] * u[2];
            if (!gp.empty()) {
              double proj[3];
              project(gi, u, r, proj);
              const double b = nb.value[i * m + k];
              for (int c = 0; c < 3; ++c) gp[i * 3 + c] += b * proj[c];
            }
          }
        }
      });
}

Tensor mlp(const Tensor& x, std::span<const LinearLayer> layers, Activation activation) {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].w.dim(0) != h.shape().back()) {
      throw DimensionError("mlp layer " + std::to_string(i) + ": width " +
                           std::to_string(h.shape().back()) + " does not match weight " +
                           shape_str(layers[i].w.shape()));
    }
    h = linear(h, layers[i].w, layers[i].b);
    if (i + 1 < layers.size()) {
      switch (activation) {
        case Activation::kLeakyRelu: h = leaky_relu(h); break;
        case Activation::kRelu: h = relu(h); break;
        case Activation::kNone: break;
      }
    }
  }
  return h;
}

}  // namespace poseforge::ag
