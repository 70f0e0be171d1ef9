#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poseforge/autograd.hpp"

namespace poseforge::ag {

struct GradCheckReport {
  // Per input: max_e |analytic_e - numeric_e| / max(max_e |numeric_e|, 1e-8).
  std::vector<double> max_relative_error;
  double tolerance = 0.0;
  bool passed = false;
};

using DifferentiableFn = std::function<Tensor(std::span<const Tensor>)>;

// Compares reverse-mode gradients of a random fixed projection of fn(inputs)
// against central differences with step h.
GradCheckReport grad_check(const DifferentiableFn& fn, std::span<const Tensor> inputs, double h,
                           double tol, std::uint64_t seed = 7);

using NamedTensor = std::pair<std::string, Tensor>;

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;  // over the sampled entries, normwise as above
  std::size_t sampled = 0;
};

// Perturbs up to `samples_per_leaf` entries of each leaf in place (restored
// afterwards) and compares d loss() / d entry with the reverse-mode gradient.
// The error is normalized by the leaf's gradient scale, floored at
// 1e5 * eps * max(1, |loss|) / h.
std::vector<ParamCheck> grad_check_leaves(const std::function<Tensor()>& loss,
                                          std::span<const NamedTensor> leaves,
                                          std::size_t samples_per_leaf, double h,
                                          std::uint64_t seed = 7);

}  // namespace poseforge::ag
