#include "poseforge/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "poseforge/ops.hpp"

namespace poseforge::ag {

namespace {

std::vector<Tensor> as_parameters(std::span<const Tensor> inputs) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) {
    out.push_back(Tensor::parameter(t.shape(), {t.values().begin(), t.values().end()}));
  }
  return out;
}

}  // namespace

GradCheckReport grad_check(const DifferentiableFn& fn, std::span<const Tensor> inputs, double h,
                           double tol, std::uint64_t seed) {
  std::vector<Tensor> params = as_parameters(inputs);

  std::vector<double> probe;
  Gradients grads;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = fn(params);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    probe.resize(out.size());
    for (double& w : probe) w = dist(rng);
    grads = compute_gradients(tape, weighted_sum(out, probe));
  }

  auto objective = [&](std::span<const Tensor> xs) {
    NoGradScope no_grad;
    Tensor out = fn(xs);
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) acc += out[i] * probe[i];
    return acc;
  };

  GradCheckReport report;
  report.tolerance = tol;
  report.passed = true;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto analytic = grads.of(params[k]);
    std::vector<double> numeric(params[k].size());
    for (std::size_t e = 0; e < numeric.size(); ++e) {
      std::vector<Tensor> shifted(params.begin(), params.end());
      std::vector<double> plus(params[k].values().begin(), params[k].values().end());
      std::vector<double> minus = plus;
      plus[e] += h;
      minus[e] -= h;
      shifted[k] = Tensor::constant(params[k].shape(), std::move(plus));
      const double fp = objective(shifted);
      shifted[k] = Tensor::constant(params[k].shape(), std::move(minus));
      const double fm = objective(shifted);
      numeric[e] = (fp - fm) / (2.0 * h);
    }
    double scale = 1e-8, worst = 0.0;
    for (std::size_t e = 0; e < numeric.size(); ++e) {
      scale = std::max(scale, std::abs(numeric[e]));
      const double a = analytic.empty() ? 0.0 : analytic[e];
      worst = std::max(worst, std::abs(a - numeric[e]));
    }
    const double rel = worst / scale;
    report.max_relative_error.push_back(rel);
    if (!(rel <= tol)) report.passed = false;
  }
  return report;
}

std::vector<ParamCheck> grad_check_leaves(const std::function<Tensor()>& loss,
                                          std::span<const NamedTensor> leaves,
                                          std::size_t samples_per_leaf, double h,
                                          std::uint64_t seed) {
  Gradients grads;
  {
    Tape tape;
    TapeScope scope(tape);
    grads = compute_gradients(tape, loss());
  }
  auto value = [&]() {
    NoGradScope no_grad;
    return loss().item();
  };
  // Gradients below the round-off resolution of the difference quotient are
  // compared on that scale instead (a leaf the loss is invariant to has a
  // true gradient of 0 and a numeric one of pure noise).
  const double noise_floor =
      1e5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value())) / h;
  std::mt19937_64 rng(seed);
  std::vector<ParamCheck> out;
  for (const auto& [name, leaf] : leaves) {
    Tensor t = leaf;
    const auto analytic = grads.has(t) ? grads.of(t) : std::span<const double>{};
    std::vector<std::size_t> picks;
    if (t.size() <= samples_per_leaf) {
      for (std::size_t e = 0; e < t.size(); ++e) picks.push_back(e);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
      for (std::size_t s = 0; s < samples_per_leaf; ++s) picks.push_back(pick(rng));
    }
    double scale = std::max(1e-8, noise_floor), worst = 0.0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    for (std::size_t e : picks) {
      auto v = t.mutable_values();
      const double orig = v[e];
      v[e] = orig + h;
      const double fp = value();
      v[e] = orig - h;
      const double fm = value();
      v[e] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[e];
      scale = std::max(scale, std::abs(numeric));
      worst = std::max(worst, std::abs(a - numeric));
    }
    out.push_back({name, worst / scale, picks.size()});
  }
  return out;
}

}  // namespace poseforge::ag
