#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "poseforge/errors.hpp"
#include "poseforge/grad_check.hpp"
#include "poseforge/ops.hpp"
#include "op_cases.hpp"
#include "test_util.hpp"

using namespace poseforge;
using namespace poseforge::ag;
using poseforge::testing::random_param;
using poseforge::testing::random_tensor;
using poseforge::testing::random_values;

namespace {

constexpr double kH = 1e-3;  // 64-bit central differences
constexpr double kTol = 1e-4;

void expect_grad_ok(const DifferentiableFn& fn, std::vector<Tensor> inputs, std::uint64_t seed = 7) {
  const GradCheckReport r = grad_check(fn, inputs, kH, kTol, seed);
  for (std::size_t i = 0; i < r.max_relative_error.size(); ++i) {
    EXPECT_LT(r.max_relative_error[i], kTol) << "input " << i;
  }
  EXPECT_TRUE(r.passed);
}

}  // namespace

TEST(Linear, IdentityCase) {
  Tensor x = Tensor::constant({1, 2}, {1, 0});
  Tensor w = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::constant({2}, {0, 0});
  Tensor y = linear(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(Linear, ScalarAffine) {
  Tensor y = linear(Tensor::constant({1}, {2}), Tensor::constant({1, 1}, {3}),
                    Tensor::constant({1}, {1}));
  EXPECT_DOUBLE_EQ(y[0], 7.0);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  Tensor x = Tensor::zeros({2, 3});
  Tensor w = Tensor::zeros({4, 2});
  try {
    (void)linear(x, w, Tensor::zeros({2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  expect_grad_ok([](std::span<const Tensor> in) { return linear(in[0], in[1], in[2]); },
                 {random_tensor({3, 4}, 1), random_tensor({4, 5}, 2), random_tensor({5}, 3)});
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tensor y = layer_norm(Tensor::constant({1, 3}, {5, 5, 5}), Tensor::full({3}, 1.0),
                        Tensor::zeros({3}), 1e-5);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LayerNorm, SymmetricPair) {
  Tensor y = layer_norm(Tensor::constant({1, 2}, {1, -1}), Tensor::full({2}, 1.0),
                        Tensor::zeros({2}), 1e-5);
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, RowMeanZero) {
  Tensor y = layer_norm(random_tensor({6, 9}, 4, -3, 5), Tensor::full({9}, 1.0),
                        Tensor::zeros({9}), 1e-5);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 9; ++c) m += y[r * 9 + c];
    EXPECT_NEAR(m / 9, 0.0, 1e-6);
  }
}

TEST(LayerNorm, EmptyAxisThrows) {
  EXPECT_THROW((void)layer_norm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})),
               DimensionError);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  expect_grad_ok(
      [](std::span<const Tensor> in) { return layer_norm(in[0], in[1], in[2], 1e-5); },
      {random_tensor({2, 8}, 5), random_tensor({8}, 6), random_tensor({8}, 7)});
}

TEST(Softmax, Examples) {
  Tensor a = softmax(Tensor::constant({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  Tensor b = softmax(Tensor::constant({2}, {1000, 1000}), 0);
  EXPECT_DOUBLE_EQ(b[0], 0.5);
  EXPECT_DOUBLE_EQ(b[1], 0.5);
  Tensor c = softmax(Tensor::constant({2}, {0, std::log(3.0)}), 0);
  EXPECT_NEAR(c[0], 0.25, 1e-15);
  EXPECT_NEAR(c[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto v = random_values(4 * 7 * 3, seed, -20, 20);
    Tensor x = Tensor::constant({4, 7, 3}, v);
    for (auto& e : v) e += 123.25;
    Tensor shifted = Tensor::constant({4, 7, 3}, v);
    Tensor y = softmax(x, 1), ys = softmax(shifted, 1);
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t in = 0; in < 3; ++in) {
        double s = 0;
        for (std::size_t l = 0; l < 7; ++l) {
          const std::size_t idx = (o * 7 + l) * 3 + in;
          EXPECT_GE(y[idx], 0.0);
          EXPECT_NEAR(y[idx], ys[idx], 1e-12);
          s += y[idx];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  for (std::size_t axis : {0u, 1u}) {
    expect_grad_ok([axis](std::span<const Tensor> in) { return softmax(in[0], axis); },
                   {random_tensor({3, 5}, 8 + axis)});
  }
}

TEST(Mlp, ZeroWeightsGiveZero) {
  std::vector<LinearLayer> layers{{Tensor::zeros({3, 4}), Tensor::zeros({4})},
                                  {Tensor::zeros({4, 2}), Tensor::zeros({2})}};
  Tensor y = mlp(random_tensor({5, 3}, 1), layers, Activation::kLeakyRelu);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, IdentityPassthrough) {
  std::vector<LinearLayer> layers{{Tensor::constant({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})}};
  Tensor x = random_tensor({3, 2}, 2);
  Tensor y = mlp(x, layers, Activation::kRelu);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Mlp, WidthMismatchThrows) {
  std::vector<LinearLayer> layers{{Tensor::zeros({3, 4}), Tensor::zeros({4})},
                                  {Tensor::zeros({5, 2}), Tensor::zeros({2})}};
  EXPECT_THROW((void)mlp(Tensor::zeros({1, 3}), layers, Activation::kRelu), DimensionError);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  for (Activation act : {Activation::kLeakyRelu, Activation::kRelu}) {
    expect_grad_ok(
        [act](std::span<const Tensor> in) {
          std::vector<LinearLayer> layers{{in[1], in[2]}, {in[3], in[4]}};
          return mlp(in[0], layers, act);
        },
        {random_tensor({4, 3}, 11), random_tensor({3, 6}, 12), random_tensor({6}, 13),
         random_tensor({6, 2}, 14), random_tensor({2}, 15)});
  }
}

TEST(LeakyRelu, SlopeIsOneHundredth) {
  Tensor y = leaky_relu(Tensor::constant({2}, {-2.0, 3.0}));
  EXPECT_DOUBLE_EQ(y[0], -0.02);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::parameter({2, 3}, random_values(6, 1));
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(x);
  }
  backward(tape, loss);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareOfThree) {
  Tensor x = Tensor::parameter({1}, {3.0});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(x, x));
  }
  backward(tape, loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = scale(x, 2.0);
  }
  EXPECT_THROW(backward(tape, y), ContractError);
}

TEST(Backward, TwiceDoublesGradients) {
  Tensor x = random_param({3, 4}, 3);
  Tensor w = random_param({4, 2}, 4);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(square(matmul(x, w)));
  }
  backward(tape, loss);
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  backward(tape, loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, AccumulatesOverAllPaths) {
  // loss = x*x + 3x at x = 2 -> 2x + 3 = 7
  Tensor x = Tensor::parameter({1}, {2.0});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(add(mul(x, x), scale(x, 3.0)));
  }
  Gradients g = compute_gradients(tape, loss);
  EXPECT_DOUBLE_EQ(g.of(x)[0], 7.0);
  EXPECT_EQ(x.grad()[0], 0.0);  // compute_gradients leaves the leaf alone
}

TEST(Tape, RecordIsTopological) {
  Tensor x = random_param({2, 3}, 5);
  Tensor w = random_param({3, 3}, 6);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor h = leaky_relu(matmul(x, w));
    (void)sum(layer_norm(h, Tensor::full({3}, 1.0), Tensor::zeros({3})));
  }
  const auto nodes = tape.nodes();
  ASSERT_GT(nodes.size(), 0u);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    for (const auto& in : nodes[k]->inputs) {
      if (in->leaf) continue;
      bool earlier = false;
      for (std::size_t j = 0; j < k; ++j) earlier = earlier || nodes[j].get() == in.get();
      EXPECT_TRUE(earlier) << "node " << k << " (" << nodes[k]->op << ")";
    }
  }
}

TEST(Tape, NoGradScopeRecordsNothing) {
  Tensor x = random_param({2, 2}, 7);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope ng;
    (void)sum(square(x));
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Gradients, MergeSums) {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  auto grad_of = [&](double c) {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(scale(x, c));
    }
    return compute_gradients(tape, loss);
  };
  Gradients a = grad_of(2.0);
  a.merge(grad_of(3.0));
  EXPECT_DOUBLE_EQ(a.of(x)[0], 5.0);
  EXPECT_DOUBLE_EQ(a.of(x)[1], 5.0);
}

TEST(Tensor, ValueCountMatchesShape) {
  EXPECT_THROW((void)Tensor::constant({2, 3}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, FiniteOutputsOnFiniteInputs) {
  Tensor x = random_tensor({4, 6}, 9, -50, 50);
  for (const Tensor& y : {softmax(x, 1), layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6})),
                          smooth_l1(x), leaky_relu(x), sqrt(square(x))}) {
    for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
  }
}

// Every differentiable op at ten random points.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchesFiniteDifferences) {
  const auto cases = poseforge::testing::op_cases(static_cast<std::uint64_t>(GetParam()));
  for (std::size_t i = 0; i < cases.size(); ++i) {
    SCOPED_TRACE("case " + std::to_string(i));
    expect_grad_ok(cases[i].fn, cases[i].inputs);
  }
}

INSTANTIATE_TEST_SUITE_P(TenRandomPoints, OpGradients, ::testing::Range(0, 10));

TEST(GaussianKernel, VerbatimAndStandardForms) {
  const double x = 3.0, mu = 4.0, s = 1.3;
  const double pi = std::numbers::pi;
  EXPECT_NEAR(gaussian_kernel(x, mu, s, true),
              1.0 / std::sqrt(2 * pi * s) * std::exp(-(x - mu) * (x - mu) / (2 * pi * s * s)), 1e-15);
  EXPECT_NEAR(gaussian_kernel(x, mu, s, false),
              1.0 / (s * std::sqrt(2 * pi)) * std::exp(-(x - mu) * (x - mu) / (2 * s * s)), 1e-15);
}

TEST(GradCheck, ReportFlagsWrongGradient) {
  // A deliberately wrong backward rule must fail the check.
  auto bad = [](std::span<const Tensor> in) {
    const Tensor& x = in[0];
    std::vector<double> y(x.values().begin(), x.values().end());
    for (auto& v : y) v = v * v;
    return detail::make_result(x.shape(), y, "bad_square", {x},
                               [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                                 auto gx = buf.of(*self.inputs[0]);
                                 for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                               });
  };
  const GradCheckReport r = grad_check(bad, std::vector<Tensor>{random_tensor({4}, 3, 1, 2)}, kH, kTol);
  EXPECT_FALSE(r.passed);
}

TEST(GradCheck, LeafCheckFlagsWrongGradient) {
  Tensor x = random_param({4}, 5, 1, 2);
  auto loss = [&] {
    std::vector<double> y(x.values().begin(), x.values().end());
    double s = 0;
    for (double v : y) s += v * v;
    // backward claims d/dx = 1 instead of 2x
    return detail::make_result({}, {s}, "bad_sumsq", {x},
                               [](const Node& self, std::span<const double> g, GradBuffers& buf) {
                                 auto gx = buf.of(*self.inputs[0]);
                                 for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                               });
  };
  std::vector<NamedTensor> leaves{{"x", x}};
  const auto checks = grad_check_leaves(loss, leaves, 4, 1e-6);
  ASSERT_EQ(checks.size(), 1u);
  EXPECT_GT(checks[0].max_relative_error, 0.1);
}
