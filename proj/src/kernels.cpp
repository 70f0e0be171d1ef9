#include "poseforge/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poseforge::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g.data() + i * n;
    double* crow = c.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

void pair_logits(std::span<const double> q, std::span<const double> k, std::span<double> out,
                 std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width,
                 double scale) {
  const std::size_t stride = heads * width;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qi = q.data() + i * stride + h * width;
        const double* kj = k.data() + j * stride + h * width;
        double acc = 0.0;
        for (std::size_t c = 0; c < width; ++c) acc += qi[c] * kj[c];
        out[(i * cols + j) * heads + h] = acc * scale;
      }
    }
  }
}

void attend(std::span<const double> p, std::span<const double> v, std::span<double> out,
            std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width) {
  const std::size_t stride = heads * width;
  for (std::size_t i = 0; i < rows; ++i) {
    double* oi = out.data() + i * stride;
    std::fill(oi, oi + stride, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double* vj = v.data() + j * stride;
      for (std::size_t h = 0; h < heads; ++h) {
        const double w = p[(i * cols + j) * heads + h];
        for (std::size_t c = 0; c < width; ++c) oi[h * width + c] += w * vj[h * width + c];
      }
    }
  }
}

void softmax(std::span<const double> x, std::span<double> y, std::size_t outer, std::size_t len,
             std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x[base];
      for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double e = std::exp(x[base + t * inner] - mx);
        y[base + t * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t t = 0; t < len; ++t) y[base + t * inner] *= inv;
    }
  }
}

void layer_norm(std::span<const double> x, std::span<double> xhat, std::span<double> inv_std,
                std::size_t rows, std::size_t width, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += xr[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < width; ++c) xhat[r * width + c] = (xr[c] - mean) * is;
  }
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g.data() + i * n;
    double* crow = c.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  // Partitioned over output rows (p) so no two threads write the same row.
  const auto outs = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t pp = 0; pp < outs; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* crow = c.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

void pair_logits(std::span<const double> q, std::span<const double> k, std::span<double> out,
                 std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width,
                 double scale) {
  const std::size_t stride = heads * width;
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) \
    if (rows * cols * stride > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t ii = 0; ii < nrows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qi = q.data() + i * stride + h * width;
        const double* kj = k.data() + j * stride + h * width;
        double acc = 0.0;
        for (std::size_t c = 0; c < width; ++c) acc += qi[c] * kj[c];
        out[(i * cols + j) * heads + h] = acc * scale;
      }
    }
  }
}

void attend(std::span<const double> p, std::span<const double> v, std::span<double> out,
            std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width) {
  const std::size_t stride = heads * width;
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) \
    if (rows * cols * stride > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t ii = 0; ii < nrows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* oi = out.data() + i * stride;
    std::fill(oi, oi + stride, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double* vj = v.data() + j * stride;
      for (std::size_t h = 0; h < heads; ++h) {
        const double w = p[(i * cols + j) * heads + h];
        for (std::size_t c = 0; c < width; ++c) oi[h * width + c] += w * vj[h * width + c];
      }
    }
  }
}

void softmax(std::span<const double> x, std::span<double> y, std::size_t outer, std::size_t len,
             std::size_t inner) {
  const auto n = static_cast<std::ptrdiff_t>(outer * inner);
#pragma omp parallel for schedule(static) \
    if (outer * len * inner > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
    const std::size_t o = static_cast<std::size_t>(idx) / inner;
    const std::size_t in = static_cast<std::size_t>(idx) % inner;
    const std::size_t base = o * len * inner + in;
    double mx = x[base];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
    double total = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double e = std::exp(x[base + t * inner] - mx);
      y[base + t * inner] = e;
      total += e;
    }
    const double inv = 1.0 / total;
    for (std::size_t t = 0; t < len; ++t) y[base + t * inner] *= inv;
  }
}

void layer_norm(std::span<const double> x, std::span<double> xhat, std::span<double> inv_std,
                std::size_t rows, std::size_t width, double eps) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * width > kParallelWork && !in_parallel_region())
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* xr = x.data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += xr[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < width; ++c) xhat[r * width + c] = (xr[c] - mean) * is;
  }
}

}  // namespace parallel

}  // namespace poseforge::kernels
