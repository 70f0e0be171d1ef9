#include <gtest/gtest.h>

#include <omp.h>

#include "poseforge/kernels.hpp"
#include "test_util.hpp"

using namespace poseforge;
namespace k = poseforge::kernels;
using poseforge::testing::random_values;

namespace {

// Sizes chosen so that loops split unevenly across threads.
constexpr std::size_t kM = 37, kK = 19, kN = 23;

class KernelAgreement : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

}  // namespace

TEST_P(KernelAgreement, Gemm) {
  const auto a = random_values(kM * kK, 1), b = random_values(kK * kN, 2), g = random_values(kM * kN, 3);
  std::vector<double> s(kM * kN, 0.5), p(kM * kN, 0.5);
  k::serial::gemm_nn(a, b, s, kM, kK, kN);
  k::parallel::gemm_nn(a, b, p, kM, kK, kN);
  EXPECT_EQ(s, p);

  std::vector<double> s2(kM * kK, 0.0), p2(kM * kK, 0.0);
  k::serial::gemm_nt(g, b, s2, kM, kK, kN);
  k::parallel::gemm_nt(g, b, p2, kM, kK, kN);
  EXPECT_EQ(s2, p2);

  std::vector<double> s3(kK * kN, 0.0), p3(kK * kN, 0.0);
  k::serial::gemm_tn(a, g, s3, kM, kK, kN);
  k::parallel::gemm_tn(a, g, p3, kM, kK, kN);
  EXPECT_EQ(s3, p3);
}

TEST_P(KernelAgreement, Attention) {
  const std::size_t rows = 13, cols = 29, heads = 4, width = 5;
  const auto q = random_values(rows * heads * width, 4), kk = random_values(cols * heads * width, 5);
  std::vector<double> s(rows * cols * heads), p(rows * cols * heads);
  k::serial::pair_logits(q, kk, s, rows, cols, heads, width, 0.3);
  k::parallel::pair_logits(q, kk, p, rows, cols, heads, width, 0.3);
  EXPECT_EQ(s, p);

  const auto v = random_values(cols * heads * width, 6);
  std::vector<double> so(rows * heads * width), po(rows * heads * width);
  k::serial::attend(s, v, so, rows, cols, heads, width);
  k::parallel::attend(s, v, po, rows, cols, heads, width);
  EXPECT_EQ(so, po);
}

TEST_P(KernelAgreement, SoftmaxAndLayerNorm) {
  const auto x = random_values(11 * 17 * 3, 7, -10, 10);
  std::vector<double> s(x.size()), p(x.size());
  k::serial::softmax(x, s, 11, 17, 3);
  k::parallel::softmax(x, p, 11, 17, 3);
  EXPECT_EQ(s, p);

  std::vector<double> sx(x.size()), px(x.size()), si(33), pi(33);
  k::serial::layer_norm(x, sx, si, 33, 17, 1e-5);
  k::parallel::layer_norm(x, px, pi, 33, 17, 1e-5);
  EXPECT_EQ(sx, px);
  EXPECT_EQ(si, pi);
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelAgreement, ::testing::Values(1, 2, 4));

TEST(Kernels, GemmMatchesNaiveLoop) {
  const auto a = random_values(kM * kK, 8), b = random_values(kK * kN, 9);
  std::vector<double> c(kM * kN, 0.0);
  k::serial::gemm_nn(a, b, c, kM, kK, kN);
  for (std::size_t i = 0; i < kM; ++i) {
    for (std::size_t j = 0; j < kN; ++j) {
      double acc = 0;
      for (std::size_t l = 0; l < kK; ++l) acc += a[i * kK + l] * b[l * kN + j];
      EXPECT_NEAR(c[i * kN + j], acc, 1e-12);
    }
  }
}

TEST(Kernels, NestedRegionRunsSerially) {
  bool inside = false;
#pragma omp parallel num_threads(2)
  {
#pragma omp single
    inside = k::in_parallel_region();
  }
  EXPECT_TRUE(inside || omp_get_max_threads() == 1);
  EXPECT_FALSE(k::in_parallel_region());
}
