#pragma once

// Differentiable operations. Broadcasting is limited to leading batch
// dimensions (bias rows, scalar gains); everything else needs matching
// shapes or an explicit reshape.

#include <cstddef>
#include <span>
#include <vector>

#include "poseforge/autograd.hpp"

namespace poseforge::ag {

constexpr double kLeakySlope = 0.01;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_constant(const Tensor& x, double c);
// x * s for a one-element tensor s.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
// x[..., n] + b[n]
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
Tensor smooth_l1(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Scalar sum of x * w for constant weights w.
Tensor weighted_sum(const Tensor& x, std::span<const double> w);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Swaps the two leading axes: [a, b, ...] -> [b, a, ...].
Tensor transpose01(const Tensor& x);

// y = x W with x[..., in], W[in, out].
Tensor matmul(const Tensor& x, const Tensor& w);
// y = x W + b.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(const Tensor& x, std::size_t axis);

// Pair layout [rows, cols, heads]: s * <Q_i^h, K_j^h> with Q[rows, heads*w],
// K[cols, heads*w].
Tensor pair_logits(const Tensor& q, const Tensor& k, std::size_t heads, double scale);
// Per-head weighted sum: O[i, h*w + c] = sum_j P[i, j, h] V[j, h*w + c].
Tensor attend(const Tensor& p, const Tensor& v);

// [N, N, C] and [M, M, C] -> [(N+M), (N+M), C] with zero off-diagonal blocks.
Tensor block_diag_pairs(const Tensor& a, const Tensor& b);
// out[i, j] = Concat(A_i, B_j, P_ij) for A[n, da], B[m, db], P[n, m, c].
Tensor pair_concat(const Tensor& a, const Tensor& b, const Tensor& p);

// table[V, w] gathered at `index`; result shape is `prefix` + [w].
Tensor embedding(const Tensor& table, std::span<const int> index, Shape prefix);

// Sum over rows with mask != 0 of -log softmax(logits_row)[target].
Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> target,
                         std::span<const char> mask);

struct GaussianSpec {
  std::vector<double> mu;
  std::vector<double> sigma;
  // Verbatim variant: 1/sqrt(2 pi s) exp(-(x-mu)^2 / (2 pi s^2)).
  // Standard variant: 1/(s sqrt(2 pi)) exp(-(x-mu)^2 / (2 s^2)).
  bool verbatim = true;
};
double gaussian_kernel(double x, double mu, double sigma, bool verbatim);

// K kernel responses of the affine-transformed distance u[t]*d + v[t], where
// t = type_index[p] for pair p. dist and type_index hold rows*cols entries;
// result is [rows, cols, K].
Tensor gaussian_kernels(std::span<const double> dist, std::span<const int> type_index,
                        std::size_t rows, std::size_t cols, const Tensor& u, const Tensor& v,
                        const GaussianSpec& spec);

// Coordinate update along unit difference vectors:
//   P'_i = P_i + sum_j a_ij u(P_i - P_j) + sum_k b_ik u(P_i - Q_k)
// with contributions below `eps` separation skipped. P[n,3] differentiable,
// anchors[m,3] fixed, a[n,n], b[n,m].
Tensor coordinate_update(const Tensor& p, std::span<const double> anchors, const Tensor& a_intra,
                         const Tensor& a_inter, double eps);

struct LinearLayer {
  Tensor w;
  Tensor b;
};
enum class Activation { kLeakyRelu, kRelu, kNone };
// Linear layers with `activation` between them (none after the last).
Tensor mlp(const Tensor& x, std::span<const LinearLayer> layers, Activation activation);

}  // namespace poseforge::ag
